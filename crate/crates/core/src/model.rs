//! Model configuration and learnable parameters.

// Required for float math in minimal no_std builds; redundant (and so
// flagged unused) whenever some crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::rng;

/// Sizes and seed of the toy selective-SSM stack.
///
/// `d_model` channels each carry an `n_state`-dimensional recurrent state;
/// `delta_rank` is the width of the low-rank step-size projection.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_state: usize,
    pub n_layers: usize,
    pub delta_rank: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_state", self.n_state),
            ("n_layers", self.n_layers),
            ("delta_rank", self.delta_rank),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} must be >= 1, got {v}"),
                });
            }
        }
        if self.delta_rank > self.d_model {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "delta_rank ({}) must not exceed d_model ({})",
                    self.delta_rank, self.d_model
                ),
            });
        }
        Ok(())
    }
}

/// Per-layer learnable tensors.
///
/// `a_log` parameterizes the continuous-time state matrix as
/// `A = -exp(a_log)` (diagonal per channel, entries strictly negative), so
/// the discretized gate `exp(delta * A)` always lands in (0, 1).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerParams {
    /// d_model x n_state.
    pub a_log: Mat,
    /// d_model x n_state input-projection weights.
    pub w_b: Mat,
    /// d_model x n_state output-projection weights.
    pub w_c: Mat,
    /// d_model x delta_rank.
    pub w_delta_down: Mat,
    /// delta_rank x d_model.
    pub w_delta_up: Mat,
    /// Step-size bias, length d_model.
    pub b_delta: Vec<f64>,
    /// Residual weight D, length d_model.
    pub d_skip: Vec<f64>,
}

/// All learnable tensors of the stack.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub config: ModelConfig,
    /// vocab_size x d_model.
    pub embedding: Mat,
    pub layers: Vec<LayerParams>,
    /// d_model x vocab_size.
    pub unembedding: Mat,
}

/// Name and shape of one tensor, in checkpoint order.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn uniform(rng: &mut impl Rng, bound: f64) -> f64 {
    rng.gen::<f64>() * 2.0 * bound - bound
}

/// How the step-size bias starts out.
///
/// The step size controls the memory horizon, so its starting point
/// decides whether slow channels exist for training to recruit: with a
/// zero bias every channel starts at `softplus(0) ~ 0.69` (uniformly
/// short memory), while the log-uniform scheme spreads initial step
/// sizes across decades so a few channels retain over long spans from
/// the start.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "scheme"))]
pub enum DeltaBiasInit {
    /// All biases zero.
    Zero,
    /// Per-channel bias `softplus^-1(dt)` with `dt` log-uniform in
    /// `[min_dt, max_dt]`.
    LogUniform { min_dt: f64, max_dt: f64 },
}

impl Default for DeltaBiasInit {
    fn default() -> Self {
        DeltaBiasInit::LogUniform {
            min_dt: 1e-4,
            max_dt: 0.1,
        }
    }
}

/// `softplus^-1(y) = ln(exp(y) - 1)`, stable for small `y`.
fn softplus_inverse(y: f64) -> f64 {
    y.exp_m1().ln()
}

impl ModelParams {
    /// Seeded initialization with the default step-size bias scheme.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        Self::init_with(config, DeltaBiasInit::default())
    }

    /// Seeded initialization.
    ///
    /// Draw order is fixed (embedding, then per layer w_b, w_c,
    /// w_delta_down, w_delta_up, b_delta draws, then unembedding) so
    /// identical configs give identical parameters. `a_log` is set so
    /// that `-exp(a_log)` spans -1..-N in each channel and the residual
    /// weight starts at one.
    pub fn init_with(config: &ModelConfig, delta_bias: DeltaBiasInit) -> Result<Self> {
        config.validate()?;
        let (v, d, n, r) = (
            config.vocab_size,
            config.d_model,
            config.n_state,
            config.delta_rank,
        );
        let mut rng = rng::stream_rng(config.seed, rng::stream::PARAMS);
        let emb_bound = 0.5;
        let proj_bound = 1.0 / (d as f64).sqrt();
        let up_bound = 1.0 / (r as f64).sqrt();

        let embedding = Mat::from_fn(v, d, |_, _| uniform(&mut rng, emb_bound));
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            let a_log = Mat::from_fn(d, n, |_, j| ((j + 1) as f64).ln());
            let w_b = Mat::from_fn(d, n, |_, _| uniform(&mut rng, proj_bound));
            let w_c = Mat::from_fn(d, n, |_, _| uniform(&mut rng, proj_bound));
            let w_delta_down = Mat::from_fn(d, r, |_, _| uniform(&mut rng, proj_bound));
            let w_delta_up = Mat::from_fn(r, d, |_, _| uniform(&mut rng, up_bound));
            let b_delta = match delta_bias {
                DeltaBiasInit::Zero => alloc::vec![0.0; d],
                DeltaBiasInit::LogUniform { min_dt, max_dt } => (0..d)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        let dt = (min_dt.ln() + u * (max_dt.ln() - min_dt.ln())).exp();
                        softplus_inverse(dt)
                    })
                    .collect(),
            };
            layers.push(LayerParams {
                a_log,
                w_b,
                w_c,
                w_delta_down,
                w_delta_up,
                b_delta,
                d_skip: alloc::vec![1.0; d],
            });
        }
        let unembedding = Mat::from_fn(d, v, |_, _| uniform(&mut rng, proj_bound));
        Ok(ModelParams {
            config: config.clone(),
            embedding,
            layers,
            unembedding,
        })
    }

    /// All-zero tensors with the same shapes; used as a gradient container.
    pub fn zeros_like(config: &ModelConfig) -> Self {
        let (v, d, n, r) = (
            config.vocab_size,
            config.d_model,
            config.n_state,
            config.delta_rank,
        );
        ModelParams {
            config: config.clone(),
            embedding: Mat::zeros(v, d),
            layers: (0..config.n_layers)
                .map(|_| LayerParams {
                    a_log: Mat::zeros(d, n),
                    w_b: Mat::zeros(d, n),
                    w_c: Mat::zeros(d, n),
                    w_delta_down: Mat::zeros(d, r),
                    w_delta_up: Mat::zeros(r, d),
                    b_delta: alloc::vec![0.0; d],
                    d_skip: alloc::vec![0.0; d],
                })
                .collect(),
            unembedding: Mat::zeros(d, v),
        }
    }

    /// Continuous-time state matrix entry `A[i][j] = -exp(a_log[i][j])`.
    #[inline]
    pub fn a_continuous(layer: &LayerParams, i: usize, j: usize) -> f64 {
        -layer.a_log.at(i, j).exp()
    }

    /// Tensor names and shapes in checkpoint order.
    pub fn tensor_specs(config: &ModelConfig) -> Vec<TensorSpec> {
        let (v, d, n, r) = (
            config.vocab_size,
            config.d_model,
            config.n_state,
            config.delta_rank,
        );
        let mut specs = Vec::new();
        let mut push = |name: String, rows: usize, cols: usize| {
            specs.push(TensorSpec { name, rows, cols });
        };
        push(String::from("embedding"), v, d);
        for l in 0..config.n_layers {
            push(format!("layers.{l}.a_log"), d, n);
            push(format!("layers.{l}.w_b"), d, n);
            push(format!("layers.{l}.w_c"), d, n);
            push(format!("layers.{l}.w_delta_down"), d, r);
            push(format!("layers.{l}.w_delta_up"), r, d);
            push(format!("layers.{l}.b_delta"), 1, d);
            push(format!("layers.{l}.d_skip"), 1, d);
        }
        push(String::from("unembedding"), d, v);
        specs
    }

    /// Flat views of every tensor, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        out.push((String::from("embedding"), self.embedding.data()));
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.a_log"), layer.a_log.data()));
            out.push((format!("layers.{l}.w_b"), layer.w_b.data()));
            out.push((format!("layers.{l}.w_c"), layer.w_c.data()));
            out.push((format!("layers.{l}.w_delta_down"), layer.w_delta_down.data()));
            out.push((format!("layers.{l}.w_delta_up"), layer.w_delta_up.data()));
            out.push((format!("layers.{l}.b_delta"), layer.b_delta.as_slice()));
            out.push((format!("layers.{l}.d_skip"), layer.d_skip.as_slice()));
        }
        out.push((String::from("unembedding"), self.unembedding.data()));
        out
    }

    /// Flat mutable views of every tensor, in checkpoint order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push((String::from("embedding"), self.embedding.data_mut()));
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{l}.a_log"), layer.a_log.data_mut()));
            out.push((format!("layers.{l}.w_b"), layer.w_b.data_mut()));
            out.push((format!("layers.{l}.w_c"), layer.w_c.data_mut()));
            out.push((
                format!("layers.{l}.w_delta_down"),
                layer.w_delta_down.data_mut(),
            ));
            out.push((format!("layers.{l}.w_delta_up"), layer.w_delta_up.data_mut()));
            out.push((format!("layers.{l}.b_delta"), layer.b_delta.as_mut_slice()));
            out.push((format!("layers.{l}.d_skip"), layer.d_skip.as_mut_slice()));
        }
        out.push((String::from("unembedding"), self.unembedding.data_mut()));
        out
    }

    /// Error with the offending tensor name if any entry is non-finite.
    pub fn check_finite(&self) -> Result<()> {
        for (name, data) in self.tensors() {
            if !data.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteGradient { param: name });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 11,
            d_model: 4,
            n_state: 3,
            n_layers: 2,
            delta_rank: 2,
            seed: 7,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::init(&cfg()).unwrap();
        let b = ModelParams::init(&cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delta_bias_schemes_differ_only_in_bias() {
        let zero = ModelParams::init_with(&cfg(), DeltaBiasInit::Zero).unwrap();
        let lu = ModelParams::init(&cfg()).unwrap();
        assert!(zero.layers[0].b_delta.iter().all(|&b| b == 0.0));
        // Log-uniform biases produce step sizes inside the configured band.
        for layer in &lu.layers {
            for &b in &layer.b_delta {
                let dt = if b > 0.0 {
                    b + (-b).exp().ln_1p()
                } else {
                    b.exp().ln_1p()
                };
                assert!((1e-4..=0.1 + 1e-12).contains(&dt), "dt = {dt}");
            }
        }
        assert_eq!(zero.embedding, lu.embedding);
        assert_eq!(zero.layers[0].w_b, lu.layers[0].w_b);
    }

    #[test]
    fn a_continuous_spans_minus_one_to_minus_n() {
        let p = ModelParams::init(&cfg()).unwrap();
        let layer = &p.layers[0];
        for i in 0..4 {
            for j in 0..3 {
                let a = ModelParams::a_continuous(layer, i, j);
                assert!((a - -((j + 1) as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_specs_match_tensors() {
        let p = ModelParams::init(&cfg()).unwrap();
        let specs = ModelParams::tensor_specs(&cfg());
        let tensors = p.tensors();
        assert_eq!(specs.len(), tensors.len());
        for (spec, (name, data)) in specs.iter().zip(&tensors) {
            assert_eq!(&spec.name, name);
            assert_eq!(spec.len(), data.len());
        }
    }

    #[test]
    fn validate_rejects_oversized_delta_rank() {
        let mut c = cfg();
        c.delta_rank = 5;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { .. })));
    }
}
