//! Positional-accuracy evaluation and the distractor sweep.

// Required for float math in minimal no_std builds; redundant (and so
// flagged unused) whenever some crate in the graph links std.
#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;


use crate::analysis::intervene::{intervene_forward, InterventionSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scan::{forward_opts, ForwardOptions, HiddenInit};
use crate::task::{gen_instance, RecallInstance, TokenId, Vocab};

/// Metadata describing the condition a curve was measured under.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Condition {
    pub relation_mode: String,
    pub n_distractors: usize,
    /// "control", "targeted", "random", ...
    pub intervention: String,
    /// "zero" or "uniform@<layer>".
    pub init: String,
}

/// Per-position accuracy tallies at one depth under one condition.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PositionalAccuracy {
    pub depth: usize,
    /// Indexed by `k - 1`.
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
    pub condition: Condition,
}

impl PositionalAccuracy {
    pub fn new(depth: usize, condition: Condition) -> Self {
        PositionalAccuracy {
            depth,
            correct: vec![0; depth],
            total: vec![0; depth],
            condition,
        }
    }

    pub fn record(&mut self, k: usize, correct: bool) {
        self.total[k - 1] += 1;
        if correct {
            self.correct[k - 1] += 1;
        }
    }

    /// Exact ratio at 1-based position `k`.
    pub fn accuracy(&self, k: usize) -> f64 {
        if self.total[k - 1] == 0 {
            0.0
        } else {
            self.correct[k - 1] as f64 / self.total[k - 1] as f64
        }
    }

    pub fn overall(&self) -> f64 {
        let total: usize = self.total.iter().sum();
        if total == 0 {
            0.0
        } else {
            self.correct.iter().sum::<usize>() as f64 / total as f64
        }
    }

    /// Wilson 95% interval at position `k`.
    pub fn wilson(&self, k: usize) -> (f64, f64) {
        wilson_interval(self.correct[k - 1], self.total[k - 1])
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(correct: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = total as f64;
    let phat = correct as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Greedy answer prediction under an optional intervention and hidden-state
/// initialization.
pub fn predict_answer(
    params: &ModelParams,
    instance: &RecallInstance,
    spec: Option<&InterventionSpec>,
    init: &HiddenInit,
) -> Result<TokenId> {
    let logits = match spec {
        Some(s) => {
            // Interventions always run from zero init (they probe the
            // stored state, not the initialization).
            intervene_forward(params, instance, s)?
        }
        None => {
            forward_opts(
                params,
                &instance.tokens(),
                &ForwardOptions {
                    init: init.clone(),
                    capture: false,
                    ablation: None,
                    delta_stats: false,
                },
            )?
            .logits
        }
    };
    Ok(argmax(logits.row(instance.answer_index())) as TokenId)
}

fn condition_of(
    instance: &RecallInstance,
    spec: Option<&InterventionSpec>,
    init: &HiddenInit,
) -> Condition {
    let intervention = match spec {
        None => "control".to_string(),
        Some(s) => match s.mode {
            crate::analysis::InterventionMode::ZeroA => "targeted".to_string(),
            crate::analysis::InterventionMode::RandomChannelsBaseline { .. } => {
                "random".to_string()
            }
        },
    };
    let init_label = match init {
        HiddenInit::Zero => "zero".to_string(),
        HiddenInit::UniformPerLayer { layer, .. } => format!("uniform@{layer}"),
    };
    Condition {
        relation_mode: instance.relation_mode.label().to_string(),
        n_distractors: instance.n_distractors,
        intervention,
        init: init_label,
    }
}

/// Evaluate greedy recall accuracy per target position.
///
/// All instances must share depth, relation mode, and distractor count so
/// the curve describes one condition.
pub fn eval_recall_curve(
    params: &ModelParams,
    dataset: &[RecallInstance],
    spec: Option<&InterventionSpec>,
    init: &HiddenInit,
) -> Result<PositionalAccuracy> {
    let first = dataset.first().ok_or(Error::EmptyInput { what: "dataset" })?;
    for inst in dataset {
        if inst.depth != first.depth
            || inst.relation_mode != first.relation_mode
            || inst.n_distractors != first.n_distractors
        {
            return Err(Error::ConditionMismatch {
                reason: format!(
                    "expected depth {}, mode {}, {} distractors",
                    first.depth,
                    first.relation_mode.label(),
                    first.n_distractors
                ),
            });
        }
    }
    let mut acc = PositionalAccuracy::new(first.depth, condition_of(first, spec, init));
    for inst in dataset {
        let pred = predict_answer(params, inst, spec, init)?;
        acc.record(inst.target_position, pred == inst.gold_object);
    }
    Ok(acc)
}

/// Re-evaluate the same triples under growing distractor counts.
///
/// Instances are regenerated from their stored seeds with the new
/// `n`, which leaves the context untouched and only extends the query
/// prefix; returns one curve per requested count.
pub fn distractor_sweep(
    params: &ModelParams,
    vocab: &Vocab,
    base: &[RecallInstance],
    counts: &[usize],
) -> Result<Vec<PositionalAccuracy>> {
    if base.is_empty() {
        return Err(Error::EmptyInput { what: "dataset" });
    }
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        let mut variant = Vec::with_capacity(base.len());
        for inst in base {
            let re = gen_instance(
                vocab,
                inst.depth,
                inst.target_position,
                inst.relation_mode,
                n,
                inst.rng_seed,
            )?;
            debug_assert_eq!(re.context_tokens, inst.context_tokens);
            variant.push(re);
        }
        out.push(eval_recall_curve(params, &variant, None, &HiddenInit::Zero)?);
    }
    Ok(out)
}
