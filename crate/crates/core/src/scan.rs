//! Recurrent scan, full forward pass, and trace capture.
//!
//! The scan is sequential in time within one sequence and shares nothing
//! mutable across sequences, so independent sequences can be evaluated in
//! parallel by the caller.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gates::{compute_gates_full, StepGates};
use crate::mat::{dot, Mat};
use crate::model::ModelParams;
use crate::rng;
use crate::task::TokenId;

/// Initial hidden state policy.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HiddenInit {
    /// All layers start from zero state.
    Zero,
    /// One layer starts from uniform [0, 1) draws; all others from zero.
    UniformPerLayer { layer: usize, seed: u64 },
}

impl HiddenInit {
    fn h0(&self, layer: usize, d: usize, n: usize) -> Mat {
        match self {
            HiddenInit::Zero => Mat::zeros(d, n),
            HiddenInit::UniformPerLayer { layer: l, seed } if *l == layer => {
                let mut r = rng::seeded(rng::mix_many(*seed, &[rng::stream::HIDDEN_INIT, *l as u64]));
                Mat::from_fn(d, n, |_, _| r.gen::<f64>())
            }
            HiddenInit::UniformPerLayer { .. } => Mat::zeros(d, n),
        }
    }
}

/// Everything recorded for one layer at one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub gates: StepGates,
    /// Hidden state after the update. d_model x n_state.
    pub h: Mat,
    /// The layer input at this timestep (the residual stream below).
    pub x: Vec<f64>,
}

/// Per-layer trace: initial state plus one record per timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub h0: Mat,
    pub steps: Vec<StepRecord>,
}

/// Full gate/state trace of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTrace {
    pub layers: Vec<LayerTrace>,
}

impl GateTrace {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of recorded timesteps.
    pub fn len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.steps.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean delta over channels for `layer` at each timestep.
    pub fn delta_series(&self, layer: usize) -> Vec<f64> {
        self.layers[layer]
            .steps
            .iter()
            .map(|s| s.gates.delta.iter().sum::<f64>() / s.gates.delta.len() as f64)
            .collect()
    }
}

/// Channels whose discretized state gate is forced to zero at the given
/// timesteps; the mechanical form of a causal gate intervention.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GateAblation {
    /// For each layer, the channels to ablate (sorted, deduplicated).
    pub channels_by_layer: Vec<Vec<usize>>,
    /// Timesteps (0-based token indices, sorted) at which to ablate.
    pub timesteps: Vec<usize>,
}

impl GateAblation {
    pub fn is_noop(&self) -> bool {
        self.timesteps.is_empty() || self.channels_by_layer.iter().all(|c| c.is_empty())
    }
}

/// One recurrent update for a single layer.
///
/// `h[i][n] = a_bar[i][n] * h_prev[i][n] + b_bar[i][n] * x[i]`,
/// `y[i] = c · h[i] + d_skip[i] * x[i]`.
pub fn scan_step(
    h_prev: &Mat,
    gates: &StepGates,
    x_t: &[f64],
    d_skip: &[f64],
) -> Result<(Mat, Vec<f64>)> {
    let (d, n) = h_prev.shape();
    if gates.a_bar.shape() != (d, n) || gates.b_bar.shape() != (d, n) {
        return Err(Error::ShapeMismatch {
            what: "scan gates",
            expected: (d, n),
            got: gates.a_bar.shape(),
        });
    }
    if x_t.len() != d || d_skip.len() != d || gates.c.len() != n {
        return Err(Error::ShapeMismatch {
            what: "scan input",
            expected: (d, n),
            got: (x_t.len(), gates.c.len()),
        });
    }
    let mut h = Mat::zeros(d, n);
    let mut y = vec![0.0; d];
    for i in 0..d {
        let hp = h_prev.row(i);
        let ab = gates.a_bar.row(i);
        let bb = gates.b_bar.row(i);
        let hr = h.row_mut(i);
        let xi = x_t[i];
        for j in 0..n {
            hr[j] = ab[j] * hp[j] + bb[j] * xi;
        }
        y[i] = dot(&gates.c, hr) + d_skip[i] * xi;
    }
    Ok((h, y))
}

/// Run-time options for [`forward_opts`].
#[derive(Clone, Debug, Default)]
pub struct ForwardOptions<'a> {
    pub init: HiddenInit,
    /// Capture the full gate/state trace.
    pub capture: bool,
    /// Zero the state gate of selected channels at selected timesteps.
    pub ablation: Option<&'a GateAblation>,
    /// Accumulate streaming delta statistics without a full trace.
    pub delta_stats: bool,
}

impl Default for HiddenInit {
    fn default() -> Self {
        HiddenInit::Zero
    }
}

/// Streaming delta statistics collected during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaTrace {
    /// `[layer][timestep]` mean delta over channels.
    pub per_layer_step_mean: Vec<Vec<f64>>,
    /// Sum of every delta value seen (all layers, steps, channels).
    pub sum: f64,
    /// Number of delta values seen.
    pub count: usize,
}

impl DeltaTrace {
    pub fn global_mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Output of a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Logits at every position. seq_len x vocab_size.
    pub logits: Mat,
    pub trace: Option<GateTrace>,
    pub delta: Option<DeltaTrace>,
}

/// Embedding, `n_layers` gated scans with residual connections, and the
/// unembedding projection. Deterministic given (params, tokens, options).
pub fn forward(
    params: &ModelParams,
    tokens: &[TokenId],
    init: &HiddenInit,
    capture: bool,
) -> Result<(Mat, Option<GateTrace>)> {
    let out = forward_opts(
        params,
        tokens,
        &ForwardOptions {
            init: init.clone(),
            capture,
            ablation: None,
            delta_stats: false,
        },
    )?;
    Ok((out.logits, out.trace))
}

pub fn forward_opts(
    params: &ModelParams,
    tokens: &[TokenId],
    opts: &ForwardOptions<'_>,
) -> Result<ForwardOutput> {
    let cfg = &params.config;
    let (d, n, v) = (cfg.d_model, cfg.n_state, cfg.vocab_size);
    if tokens.is_empty() {
        return Err(Error::EmptyInput {
            what: "token sequence",
        });
    }
    for &t in tokens {
        if t as usize >= v {
            return Err(Error::TokenOutOfVocab {
                token: t,
                vocab_size: v,
            });
        }
    }
    if let Some(ab) = opts.ablation {
        if ab.channels_by_layer.len() != cfg.n_layers {
            return Err(Error::InvalidIntervention {
                reason: alloc::format!(
                    "ablation covers {} layers, model has {}",
                    ab.channels_by_layer.len(),
                    cfg.n_layers
                ),
            });
        }
        for chs in &ab.channels_by_layer {
            if chs.iter().any(|&c| c >= d) {
                return Err(Error::InvalidIntervention {
                    reason: alloc::format!("channel out of range (d_model = {d})"),
                });
            }
        }
        if ab.timesteps.iter().any(|&t| t >= tokens.len()) {
            return Err(Error::InvalidIntervention {
                reason: alloc::format!("timestep beyond sequence length {}", tokens.len()),
            });
        }
    }

    let seq = tokens.len();
    // Residual stream, updated in place layer by layer.
    let mut xs: Vec<Vec<f64>> = tokens
        .iter()
        .map(|&t| params.embedding.row(t as usize).to_vec())
        .collect();

    let mut trace = opts.capture.then(|| GateTrace { layers: Vec::new() });
    let mut delta = opts.delta_stats.then(|| DeltaTrace {
        per_layer_step_mean: vec![Vec::with_capacity(seq); cfg.n_layers],
        sum: 0.0,
        count: 0,
    });

    for (l, lp) in params.layers.iter().enumerate() {
        let h0 = opts.init.h0(l, d, n);
        let mut layer_trace = opts.capture.then(|| LayerTrace {
            h0: h0.clone(),
            steps: Vec::with_capacity(seq),
        });
        let mut h = h0;
        for (t, x) in xs.iter_mut().enumerate() {
            let (mut gates, _) = compute_gates_full(params, l, x)?;
            if let Some(ab) = opts.ablation {
                if ab.timesteps.binary_search(&t).is_ok() {
                    for &ch in &ab.channels_by_layer[l] {
                        gates.a_bar.row_mut(ch).fill(0.0);
                    }
                }
            }
            let (h_new, y) = scan_step(&h, &gates, x, &lp.d_skip)?;
            h = h_new;
            if let Some(dt) = delta.as_mut() {
                let s: f64 = gates.delta.iter().sum();
                dt.per_layer_step_mean[l].push(s / d as f64);
                dt.sum += s;
                dt.count += d;
            }
            if let Some(lt) = layer_trace.as_mut() {
                lt.steps.push(StepRecord {
                    gates,
                    h: h.clone(),
                    x: x.clone(),
                });
            }
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi += yi;
            }
        }
        if let (Some(tr), Some(lt)) = (trace.as_mut(), layer_trace) {
            tr.layers.push(lt);
        }
    }

    let mut logits = Mat::zeros(seq, v);
    for (t, x) in xs.iter().enumerate() {
        let row = logits.row_mut(t);
        for (i, &xi) in x.iter().enumerate() {
            let w = params.unembedding.row(i);
            for (o, &wv) in row.iter_mut().zip(w) {
                *o += xi * wv;
            }
        }
    }

    Ok(ForwardOutput {
        logits,
        trace,
        delta,
    })
}
