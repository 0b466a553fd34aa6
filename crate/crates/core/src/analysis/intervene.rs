//! Causal gate interventions.
//!
//! An intervention zeroes the discretized state gate of selected channels
//! at selected timesteps, severing whatever the state carried up to that
//! point for those channels. The random baseline ablates an equal number
//! of channels with the same per-layer distribution.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::model::{ModelConfig, ModelParams};
use crate::rng;
use crate::scan::{forward_opts, ForwardOptions, GateAblation, HiddenInit};
use crate::task::RecallInstance;

/// How the targeted channels are chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "mode"))]
pub enum InterventionMode {
    /// Ablate exactly the listed target channels.
    ZeroA,
    /// Ablate `count` randomly chosen channels instead, matching the
    /// per-layer distribution of the targets.
    RandomChannelsBaseline { count: usize, seed: u64 },
}

/// A causal intervention: which channels, when, and how.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterventionSpec {
    /// `(layer, channels)` pairs.
    pub targets: Vec<(usize, Vec<usize>)>,
    /// 0-based token indices at which gates are zeroed. Use
    /// [`RecallInstance::first_triple_span`] for the default span.
    pub timesteps: Vec<usize>,
    pub mode: InterventionMode,
}

impl InterventionSpec {
    /// Targeted ablation over the first triple's token span.
    pub fn zero_a(targets: Vec<(usize, Vec<usize>)>, timesteps: Vec<usize>) -> Self {
        InterventionSpec {
            targets,
            timesteps,
            mode: InterventionMode::ZeroA,
        }
    }

    /// Count-matched random baseline for the same targets and timesteps.
    pub fn random_baseline(&self, seed: u64) -> Self {
        InterventionSpec {
            targets: self.targets.clone(),
            timesteps: self.timesteps.clone(),
            mode: InterventionMode::RandomChannelsBaseline {
                count: self.targets.iter().map(|(_, c)| c.len()).sum(),
                seed,
            },
        }
    }
}

/// Turn a spec into the concrete per-layer channel sets the scan applies.
pub fn resolve_intervention(
    spec: &InterventionSpec,
    config: &ModelConfig,
) -> Result<GateAblation> {
    let mut per_layer: Vec<Vec<usize>> = alloc::vec![Vec::new(); config.n_layers];
    for (layer, channels) in &spec.targets {
        if *layer >= config.n_layers {
            return Err(Error::InvalidIntervention {
                reason: format!("layer {layer} out of range ({} layers)", config.n_layers),
            });
        }
        for &ch in channels {
            if ch >= config.d_model {
                return Err(Error::InvalidIntervention {
                    reason: format!("channel {ch} out of range (d_model = {})", config.d_model),
                });
            }
            per_layer[*layer].push(ch);
        }
    }
    for chs in per_layer.iter_mut() {
        chs.sort_unstable();
        chs.dedup();
    }

    if let InterventionMode::RandomChannelsBaseline { count, seed } = spec.mode {
        let total: usize = per_layer.iter().map(Vec::len).sum();
        if count != total {
            return Err(Error::InvalidIntervention {
                reason: format!(
                    "baseline count {count} does not match {total} targeted channels"
                ),
            });
        }
        let mut r = rng::stream_rng(seed, rng::stream::BASELINE);
        for chs in per_layer.iter_mut() {
            let k = chs.len();
            if k == 0 {
                continue;
            }
            let mut drawn: Vec<usize> = sample(&mut r, config.d_model, k).iter().collect();
            drawn.sort_unstable();
            *chs = drawn;
        }
    }

    let mut timesteps = spec.timesteps.clone();
    timesteps.sort_unstable();
    timesteps.dedup();

    Ok(GateAblation {
        channels_by_layer: per_layer,
        timesteps,
    })
}

/// Forward pass with the intervention applied; identical to the plain
/// forward everywhere except the ablated gates, so outputs at positions
/// before the earliest ablated timestep are bit-identical to the control
/// run. Timesteps must fall inside the instance's context.
pub fn intervene_forward(
    params: &ModelParams,
    instance: &RecallInstance,
    spec: &InterventionSpec,
) -> Result<Mat> {
    let ablation = resolve_intervention(spec, &params.config)?;
    if let Some(&t) = ablation.timesteps.last() {
        if t >= instance.context_len() {
            return Err(Error::InvalidIntervention {
                reason: format!(
                    "timestep {t} is outside the context (length {})",
                    instance.context_len()
                ),
            });
        }
    }
    let out = forward_opts(
        params,
        &instance.tokens(),
        &ForwardOptions {
            init: HiddenInit::Zero,
            capture: false,
            ablation: Some(&ablation),
            delta_stats: false,
        },
    )?;
    Ok(out.logits)
}
