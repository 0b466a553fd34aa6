//! Training: cross-entropy loss, exact backpropagation through the scan,
//! and a deterministic loop with periodic positional-accuracy evaluation.

mod backward;
mod optim;

pub use backward::{backward, backward_masked, loss, loss_targets};
pub use optim::{clip_grad_norm, Optimizer, OptimizerKind};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng;
use crate::scan::{forward, HiddenInit};
use crate::task::RecallInstance;

/// Which positions contribute to the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossPositions {
    /// Only the answer position (the logits at the last input token,
    /// which predict the gold object).
    AnswerOnly,
    /// Next-token prediction at every position, with the gold object as
    /// the target at the final position.
    AllContext,
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub steps: usize,
    pub grad_clip_norm: Option<f64>,
    pub loss_positions: LossPositions,
    pub eval_interval: usize,
    pub seed: u64,
    /// Stop early once combined eval accuracy reaches this level.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            optimizer: OptimizerKind::adam_default(),
            batch_size: 32,
            steps: 1000,
            grad_clip_norm: Some(1.0),
            loss_positions: LossPositions::AnswerOnly,
            eval_interval: 100,
            seed: 0,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("learning rate must be > 0, got {}", self.learning_rate),
            });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig {
                reason: "batch_size must be >= 1".to_string(),
            });
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidConfig {
                reason: "eval_interval must be >= 1".to_string(),
            });
        }
        Ok(())
    }
}

/// A named evaluation split.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub name: String,
    pub instances: Vec<RecallInstance>,
}

/// Per-position accuracy tallies for one evaluation split.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalCurve {
    pub name: String,
    /// Indexed by `k - 1`.
    pub correct: Vec<usize>,
    pub total: Vec<usize>,
}

impl EvalCurve {
    pub fn accuracy(&self, k: usize) -> f64 {
        let t = self.total[k - 1];
        if t == 0 {
            0.0
        } else {
            self.correct[k - 1] as f64 / t as f64
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
}

/// Snapshot of training state at one evaluation point.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub step: usize,
    pub train_loss: f64,
    pub eval: Vec<EvalCurve>,
}

/// Why the loop stopped.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainStatus {
    Completed,
    ReachedTarget { step: usize },
    /// Loss or gradients became non-finite; history ends at the last
    /// good checkpoint.
    Diverged { step: usize, reason: String },
}

/// Training result: checkpoints at every evaluation point plus final
/// optimizer state (for resumable checkpoints).
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<Checkpoint>,
    pub status: TrainStatus,
    pub optimizer: Optimizer,
}

impl TrainOutcome {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.history.last().expect("history is never empty")
    }
}

/// Greedy answer prediction: argmax of the logits at the last input
/// position (first index wins ties).
pub fn predict_answer(params: &ModelParams, instance: &RecallInstance) -> Result<u32> {
    let (logits, _) = forward(params, &instance.tokens(), &HiddenInit::Zero, false)?;
    let row = logits.row(instance.answer_index());
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    Ok(best as u32)
}

fn eval_curves(params: &ModelParams, eval_sets: &[EvalSet]) -> Result<Vec<EvalCurve>> {
    let mut out = Vec::with_capacity(eval_sets.len());
    for set in eval_sets {
        let max_k = set
            .instances
            .iter()
            .map(|i| i.target_position)
            .max()
            .unwrap_or(0);
        let mut curve = EvalCurve {
            name: set.name.clone(),
            correct: vec![0; max_k],
            total: vec![0; max_k],
        };
        for inst in &set.instances {
            let pred = predict_answer(params, inst)?;
            let k = inst.target_position;
            curve.total[k - 1] += 1;
            if pred == inst.gold_object {
                curve.correct[k - 1] += 1;
            }
        }
        out.push(curve);
    }
    Ok(out)
}

fn combined_accuracy(curves: &[EvalCurve]) -> f64 {
    let correct: usize = curves.iter().map(|c| c.correct.iter().sum::<usize>()).sum();
    let total: usize = curves.iter().map(|c| c.total.iter().sum::<usize>()).sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Train from freshly supplied parameters.
///
/// Deterministic under `(config, params, dataset, eval_sets)`. A checkpoint
/// is recorded at step 0, every `eval_interval` steps, and at the final
/// step. Non-finite loss or gradients end the run with
/// [`TrainStatus::Diverged`] and the history intact.
pub fn train_loop(
    config: &TrainConfig,
    params: ModelParams,
    dataset: &[RecallInstance],
    eval_sets: &[EvalSet],
) -> Result<TrainOutcome> {
    let optimizer = Optimizer::new(
        config.optimizer.clone(),
        config.learning_rate,
        &params.config,
    );
    train_loop_with(config, params, optimizer, 0, dataset, eval_sets)
}

/// Train continuing from an existing optimizer state and step counter.
pub fn train_loop_with(
    config: &TrainConfig,
    mut params: ModelParams,
    mut optimizer: Optimizer,
    start_step: usize,
    dataset: &[RecallInstance],
    eval_sets: &[EvalSet],
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput { what: "dataset" });
    }

    let mut rng = rng::stream_rng(config.seed, rng::stream::BATCH);
    let mut history: Vec<Checkpoint> = Vec::new();

    // Fresh runs record the initial state; resumed runs already have it.
    if start_step == 0 {
        // Initial loss over a deterministic probe slice; no RNG consumed.
        let probe = &dataset[..config.batch_size.min(dataset.len())];
        let (initial_loss, _) = backward(&params, probe, config.loss_positions)?;
        history.push(Checkpoint {
            params: params.clone(),
            step: 0,
            train_loss: initial_loss,
            eval: eval_curves(&params, eval_sets)?,
        });
        if let Some(target) = config.target_accuracy {
            if combined_accuracy(&history[0].eval) >= target {
                return Ok(TrainOutcome {
                    history,
                    status: TrainStatus::ReachedTarget { step: 0 },
                    optimizer,
                });
            }
        }
    }

    let mut batch: Vec<RecallInstance> = Vec::with_capacity(config.batch_size);
    for step in start_step + 1..=start_step + config.steps {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(dataset[rng.gen_range(0..dataset.len())].clone());
        }
        let (loss, mut grads) = match backward(&params, &batch, config.loss_positions) {
            Ok(v) => v,
            Err(Error::NonFiniteGradient { param }) => {
                return Ok(TrainOutcome {
                    history,
                    status: TrainStatus::Diverged {
                        step,
                        reason: format!("non-finite gradient in {param}"),
                    },
                    optimizer,
                });
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Ok(TrainOutcome {
                history,
                status: TrainStatus::Diverged {
                    step,
                    reason: "non-finite loss".to_string(),
                },
                optimizer,
            });
        }
        if let Some(max_norm) = config.grad_clip_norm {
            clip_grad_norm(&mut grads, max_norm);
        }
        optimizer.step(&mut params, &grads);

        let is_eval = step % config.eval_interval == 0 || step == start_step + config.steps;
        if is_eval {
            let eval = eval_curves(&params, eval_sets)?;
            let reached = config
                .target_accuracy
                .map(|t| combined_accuracy(&eval) >= t)
                .unwrap_or(false);
            history.push(Checkpoint {
                params: params.clone(),
                step,
                train_loss: loss,
                eval,
            });
            if reached {
                return Ok(TrainOutcome {
                    history,
                    status: TrainStatus::ReachedTarget { step },
                    optimizer,
                });
            }
        }
    }

    if history.is_empty() {
        // Resumed run with zero steps: snapshot the state as-is.
        let probe = &dataset[..config.batch_size.min(dataset.len())];
        let (loss, _) = backward(&params, probe, config.loss_positions)?;
        let eval = eval_curves(&params, eval_sets)?;
        history.push(Checkpoint {
            params,
            step: start_step,
            train_loss: loss,
            eval,
        });
    }
    Ok(TrainOutcome {
        history,
        status: TrainStatus::Completed,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::task::{gen_dataset, RelationMode, Vocab};

    fn tiny_setup() -> (ModelParams, Vec<RecallInstance>) {
        let vocab = Vocab::synthetic(4, 3, 4, 2);
        let cfg = ModelConfig {
            vocab_size: vocab.token_count(),
            d_model: 8,
            n_state: 4,
            n_layers: 2,
            delta_rank: 2,
            seed: 21,
        };
        let params = ModelParams::init(&cfg).unwrap();
        let data = gen_dataset(&vocab, &[2], 4, RelationMode::Repeated, 3).unwrap();
        (params, data)
    }

    #[test]
    fn zero_steps_returns_initial_params() {
        let (params, data) = tiny_setup();
        let config = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let out = train_loop(&config, params.clone(), &data, &[]).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].step, 0);
        assert_eq!(out.history[0].params, params);
        assert!(out.history[0].train_loss.is_finite());
    }

    #[test]
    fn identical_seeds_give_identical_final_params() {
        let (params, data) = tiny_setup();
        let config = TrainConfig {
            steps: 20,
            eval_interval: 10,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train_loop(&config, params.clone(), &data, &[]).unwrap();
        let b = train_loop(&config, params, &data, &[]).unwrap();
        assert_eq!(
            a.final_checkpoint().params,
            b.final_checkpoint().params,
            "training must be bit-deterministic"
        );
    }

    #[test]
    fn single_instance_overfits_quickly() {
        let (params, data) = tiny_setup();
        let one = &data[..1];
        let config = TrainConfig {
            learning_rate: 1e-2,
            steps: 500,
            batch_size: 1,
            eval_interval: 50,
            ..TrainConfig::default()
        };
        let out = train_loop(&config, params, one, &[]).unwrap();
        let final_loss = out.final_checkpoint().train_loss;
        assert!(
            final_loss < 0.01,
            "overfit loss should drop below 0.01, got {final_loss}"
        );
    }

    #[test]
    fn full_batch_sgd_step_does_not_increase_loss() {
        let (params, data) = tiny_setup();
        let batch = &data[..4];
        let before = batch
            .iter()
            .map(|i| loss(&params, i, LossPositions::AnswerOnly).unwrap())
            .sum::<f64>()
            / 4.0;
        let (_, grads) = backward(&params, batch, LossPositions::AnswerOnly).unwrap();
        let mut stepped = params.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 1e-4, &params.config);
        opt.step(&mut stepped, &grads);
        let after = batch
            .iter()
            .map(|i| loss(&stepped, i, LossPositions::AnswerOnly).unwrap())
            .sum::<f64>()
            / 4.0;
        assert!(
            after <= before,
            "small SGD step must not increase loss: {before} -> {after}"
        );
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (params, _) = tiny_setup();
        let err = train_loop(&TrainConfig::default(), params, &[], &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { .. }));
    }
}
