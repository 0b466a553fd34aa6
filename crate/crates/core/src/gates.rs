//! Input-dependent gate computation and discretization.
//!
//! Each timestep turns the layer input `x_t` into:
//!
//! * `delta` — per-channel positive step size from a low-rank projection
//!   followed by softplus; it acts as a learned forgetting gate,
//! * `a_bar[i][n] = exp(delta[i] * A[i][n])` — the exact-exponential
//!   discretization of the diagonal state matrix, always in (0, 1),
//! * `b_bar[i][n] = delta[i] * B[n]` — Euler-discretized input gate,
//! * `c[n]` — output projection, shared across channels.

use alloc::vec;
use alloc::vec::Vec;

// Required for float math in minimal no_std builds; redundant (and so
// flagged unused) whenever some crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::mat::{vec_mat_into, Mat};
use crate::model::{LayerParams, ModelParams};

/// Discretized gates for one layer at one timestep.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepGates {
    /// Per-channel step size, strictly positive. Length d_model.
    pub delta: Vec<f64>,
    /// Discretized state gate, entries in (0, 1). d_model x n_state.
    pub a_bar: Mat,
    /// Discretized input gate. d_model x n_state.
    pub b_bar: Mat,
    /// Output gate, shared across channels. Length n_state.
    pub c: Vec<f64>,
}

/// Pre-activation values needed to differentiate the gate computation.
#[derive(Clone, Debug)]
pub(crate) struct GatePre {
    /// Low-rank bottleneck `x · w_delta_down`. Length delta_rank.
    pub m: Vec<f64>,
    /// Logistic of the softplus pre-activation, i.e. d(delta)/d(z).
    pub sigma_z: Vec<f64>,
    /// Raw input projection `x · w_b`. Length n_state.
    pub b_proj: Vec<f64>,
}

/// Overflow-safe softplus: `ln(1 + exp(z))`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function, the derivative of softplus.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Compute the discretized gates for `layer` given the layer input `x_t`.
///
/// Rejects non-finite inputs; output satisfies `delta > 0` and
/// `a_bar` in (0, 1) elementwise.
pub fn compute_gates(params: &ModelParams, layer: usize, x_t: &[f64]) -> Result<StepGates> {
    compute_gates_full(params, layer, x_t).map(|(g, _)| g)
}

pub(crate) fn compute_gates_full(
    params: &ModelParams,
    layer: usize,
    x_t: &[f64],
) -> Result<(StepGates, GatePre)> {
    let d = params.config.d_model;
    let n = params.config.n_state;
    if x_t.len() != d {
        return Err(Error::ShapeMismatch {
            what: "gate input",
            expected: (1, d),
            got: (1, x_t.len()),
        });
    }
    if !x_t.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput { what: "gate input" });
    }
    let lp: &LayerParams = &params.layers[layer];

    // delta = softplus(x · w_delta_down · w_delta_up + b_delta)
    let mut m = vec![0.0; params.config.delta_rank];
    vec_mat_into(x_t, &lp.w_delta_down, &mut m);
    let mut z = vec![0.0; d];
    vec_mat_into(&m, &lp.w_delta_up, &mut z);
    for (zi, bi) in z.iter_mut().zip(&lp.b_delta) {
        *zi += bi;
    }
    let mut delta = Vec::with_capacity(d);
    let mut sigma_z = Vec::with_capacity(d);
    for &zi in &z {
        delta.push(softplus(zi));
        sigma_z.push(sigmoid(zi));
    }

    let mut b_proj = vec![0.0; n];
    vec_mat_into(x_t, &lp.w_b, &mut b_proj);
    let mut c = vec![0.0; n];
    vec_mat_into(x_t, &lp.w_c, &mut c);

    let mut a_bar = Mat::zeros(d, n);
    let mut b_bar = Mat::zeros(d, n);
    for i in 0..d {
        let di = delta[i];
        let a_log_row = lp.a_log.row(i);
        let ab = a_bar.row_mut(i);
        for (j, a) in ab.iter_mut().enumerate() {
            *a = (di * -a_log_row[j].exp()).exp();
        }
        let bb = b_bar.row_mut(i);
        for (j, b) in bb.iter_mut().enumerate() {
            *b = di * b_proj[j];
        }
    }

    Ok((
        StepGates {
            delta,
            a_bar,
            b_bar,
            c,
        },
        GatePre { m, sigma_z, b_proj },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn params(d: usize, n: usize, r: usize, seed: u64) -> ModelParams {
        ModelParams::init(&ModelConfig {
            vocab_size: 7,
            d_model: d,
            n_state: n,
            n_layers: 1,
            delta_rank: r,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn zero_input_gives_softplus_of_bias() {
        // With x = 0 and b_delta = 0 every channel gets delta = ln 2.
        let mut p = params(4, 3, 2, 1);
        for b in p.layers[0].b_delta.iter_mut() {
            *b = 0.0;
        }
        let g = compute_gates(&p, 0, &[0.0; 4]).unwrap();
        for &d in &g.delta {
            assert!((d - core::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn small_delta_approaches_identity_gates() {
        // delta -> 0 means no forgetting (a_bar -> 1) and no injection
        // (b_bar -> 0).
        let mut p = params(3, 2, 2, 2);
        for b in p.layers[0].b_delta.iter_mut() {
            *b = -40.0; // softplus(-40) ~ 4e-18
        }
        for w in p.layers[0].w_delta_down.data_mut() {
            *w = 0.0;
        }
        let x = [0.3, -0.2, 0.9];
        let g = compute_gates(&p, 0, &x).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((g.a_bar.at(i, j) - 1.0).abs() < 1e-15);
                assert!(g.b_bar.at(i, j).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gates_stay_in_range_on_random_inputs() {
        let p = params(5, 4, 3, 3);
        let mut r = crate::rng::seeded(99);
        use rand::Rng;
        for _ in 0..50 {
            let x: alloc::vec::Vec<f64> = (0..5).map(|_| r.gen::<f64>() * 6.0 - 3.0).collect();
            let g = compute_gates(&p, 0, &x).unwrap();
            assert!(g.delta.iter().all(|&d| d > 0.0));
            assert!(g.a_bar.data().iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }

    #[test]
    fn matches_straight_line_reevaluation() {
        // Independent re-evaluation of the gate formulas with compensated
        // dot products; agreement must be tighter than 1e-12 relative.
        let p = params(4, 3, 2, 7);
        let x = [0.17, -1.3, 0.55, 2.1];
        let g = compute_gates(&p, 0, &x).unwrap();

        let kahan_dot = |pairs: &[(f64, f64)]| -> f64 {
            let mut sum = 0.0;
            let mut comp = 0.0;
            for &(a, b) in pairs {
                let y = a * b - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            sum
        };

        let lp = &p.layers[0];
        let r = p.config.delta_rank;
        for i in 0..4 {
            let mut z = 0.0;
            for rho in 0..r {
                let m_rho = kahan_dot(
                    &(0..4)
                        .map(|k| (x[k], lp.w_delta_down.at(k, rho)))
                        .collect::<alloc::vec::Vec<_>>(),
                );
                z += m_rho * lp.w_delta_up.at(rho, i);
            }
            z += lp.b_delta[i];
            let delta = softplus(z);
            let rel = (g.delta[i] - delta).abs() / delta.abs().max(1e-300);
            assert!(rel < 1e-12, "delta[{i}] rel err {rel}");
            for j in 0..3 {
                let a = (delta * -(lp.a_log.at(i, j).exp())).exp();
                let b_proj = kahan_dot(
                    &(0..4)
                        .map(|k| (x[k], lp.w_b.at(k, j)))
                        .collect::<alloc::vec::Vec<_>>(),
                );
                let b = delta * b_proj;
                let rel_a = (g.a_bar.at(i, j) - a).abs() / a.abs().max(1e-300);
                assert!(rel_a < 1e-12, "a_bar[{i}][{j}] rel err {rel_a}");
                let denom = b.abs().max(1e-300);
                assert!((g.b_bar.at(i, j) - b).abs() / denom < 1e-12);
            }
        }
        for j in 0..3 {
            let c = kahan_dot(
                &(0..4)
                    .map(|k| (x[k], p.layers[0].w_c.at(k, j)))
                    .collect::<alloc::vec::Vec<_>>(),
            );
            assert!((g.c[j] - c).abs() / c.abs().max(1e-300) < 1e-12);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let p = params(3, 2, 2, 4);
        let err = compute_gates(&p, 0, &[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteInput { .. }));
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(-800.0) < 1e-300);
    }
}
