//! SGD and Adam with state aligned to the checkpoint tensor order.

// Required for float math in minimal no_std builds; redundant (and so
// flagged unused) whenever some crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use crate::model::{ModelConfig, ModelParams};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase", tag = "kind"))]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer with first/second-moment state stored per tensor, in the same
/// order as [`ModelParams::tensor_specs`] so it round-trips through
/// checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Number of updates applied (Adam bias-correction time).
    pub steps_taken: usize,
    /// First moments, empty for SGD.
    pub m: Vec<Vec<f64>>,
    /// Second moments, empty for SGD.
    pub v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, config: &ModelConfig) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => {
                let sizes: Vec<usize> = ModelParams::tensor_specs(config)
                    .iter()
                    .map(|s| s.len())
                    .collect();
                (
                    sizes.iter().map(|&n| vec![0.0; n]).collect(),
                    sizes.iter().map(|&n| vec![0.0; n]).collect(),
                )
            }
        };
        Optimizer {
            kind,
            lr,
            steps_taken: 0,
            m,
            v,
        }
    }

    /// Apply one update; `grads` must share shapes with `params`.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.steps_taken += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let g = grads.tensors();
                for (pi, (_, p)) in params.tensors_mut().into_iter().enumerate() {
                    for (pv, &gv) in p.iter_mut().zip(g[pi].1) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps_taken as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let g = grads.tensors();
                for (pi, (_, p)) in params.tensors_mut().into_iter().enumerate() {
                    let m = &mut self.m[pi];
                    let v = &mut self.v[pi];
                    for (e, (pv, &gv)) in p.iter_mut().zip(g[pi].1).enumerate() {
                        m[e] = beta1 * m[e] + (1.0 - beta1) * gv;
                        v[e] = beta2 * v[e] + (1.0 - beta2) * gv * gv;
                        let m_hat = m[e] / bc1;
                        let v_hat = v[e] / bc2;
                        *pv -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`; returns
/// the pre-clip norm.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, data) in grads.tensors() {
        for &g in data {
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, data) in grads.tensors_mut() {
            for g in data {
                *g *= scale;
            }
        }
    }
    norm
}
