//! `ssmlab train` — deterministic training with chunked progress logging.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};

use ssmlab_core::train::{
    train_loop_with, Checkpoint, EvalSet, LossPositions, Optimizer, OptimizerKind, TrainConfig,
    TrainStatus,
};
use ssmlab_core::model::DeltaBiasInit;
use ssmlab_core::{ModelConfig, ModelParams, RecallInstance, RelationMode};

use crate::checkpoint::save;
use crate::dataset::{load_dataset, load_vocab};
use crate::runcfg::{check_subcommand, load_file_args, pick, pick_required, prepare_run_dir};
use crate::{CmdError, CmdResult};

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Resume parameters and optimizer state from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_state: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub delta_rank: Option<usize>,
    #[arg(long)]
    pub model_seed: Option<u64>,
    /// Step-size bias init: loguniform | zero.
    #[arg(long)]
    pub delta_init: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// adam | sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Global gradient-norm clip; 0 disables.
    #[arg(long)]
    pub clip: Option<f64>,
    /// answer | all
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    /// Cap on evaluation instances per relation mode.
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop early at this combined eval accuracy.
    #[arg(long)]
    pub target_acc: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct TrainResolved {
    pub subcommand: String,
    pub dataset: PathBuf,
    pub vocab: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    pub d_model: usize,
    pub n_state: usize,
    pub layers: usize,
    pub delta_rank: usize,
    pub model_seed: u64,
    pub delta_init: String,
    pub lr: f64,
    pub optimizer: String,
    pub batch: usize,
    pub steps: usize,
    pub clip: f64,
    pub loss: String,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_acc: Option<f64>,
}

pub fn resolve(args: &TrainArgs) -> CmdResult<TrainResolved> {
    let file: TrainArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "train")?;
    let resolved = TrainResolved {
        subcommand: "train".to_string(),
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        vocab: pick_required(args.vocab.clone(), file.vocab, "vocab")?,
        resume: args.resume.clone().or(file.resume),
        d_model: pick(args.d_model, file.d_model, 64),
        n_state: pick(args.n_state, file.n_state, 16),
        layers: pick(args.layers, file.layers, 2),
        delta_rank: pick(args.delta_rank, file.delta_rank, 8),
        model_seed: pick(args.model_seed, file.model_seed, 7),
        delta_init: pick(args.delta_init.clone(), file.delta_init, "loguniform".to_string()),
        lr: pick(args.lr, file.lr, 3e-3),
        optimizer: pick(args.optimizer.clone(), file.optimizer, "adam".to_string()),
        batch: pick(args.batch, file.batch, 32),
        steps: pick(args.steps, file.steps, 1000),
        clip: pick(args.clip, file.clip, 1.0),
        loss: pick(args.loss.clone(), file.loss, "answer".to_string()),
        eval_interval: pick(args.eval_interval, file.eval_interval, 250),
        eval_samples: pick(args.eval_samples, file.eval_samples, 400),
        seed: pick(args.seed, file.seed, 0),
        target_acc: args.target_acc.or(file.target_acc),
    };
    match resolved.optimizer.as_str() {
        "adam" | "sgd" => {}
        other => {
            return Err(CmdError::Config(anyhow::anyhow!(
                "optimizer must be adam or sgd, got `{other}`"
            )))
        }
    }
    match resolved.loss.as_str() {
        "answer" | "all" => {}
        other => {
            return Err(CmdError::Config(anyhow::anyhow!(
                "loss must be answer or all, got `{other}`"
            )))
        }
    }
    match resolved.delta_init.as_str() {
        "loguniform" | "zero" => {}
        other => {
            return Err(CmdError::Config(anyhow::anyhow!(
                "delta_init must be loguniform or zero, got `{other}`"
            )))
        }
    }
    Ok(resolved)
}

fn eval_sets(instances: &[RecallInstance], cap: usize) -> Vec<EvalSet> {
    let mut sets = Vec::new();
    for mode in [RelationMode::Repeated, RelationMode::Random] {
        let subset: Vec<RecallInstance> = instances
            .iter()
            .filter(|i| i.relation_mode == mode)
            .take(cap)
            .cloned()
            .collect();
        if !subset.is_empty() {
            sets.push(EvalSet {
                name: mode.label().to_string(),
                instances: subset,
            });
        }
    }
    sets
}

fn log_checkpoint(log: &mut impl Write, ck: &Checkpoint) -> std::io::Result<()> {
    for curve in &ck.eval {
        for k in 1..=curve.total.len() {
            writeln!(
                log,
                "{},{},{},{},{},{},{}",
                ck.step,
                ck.train_loss,
                curve.name,
                k,
                curve.correct[k - 1],
                curve.total[k - 1],
                curve.accuracy(k)
            )?;
        }
    }
    Ok(())
}

pub fn run(out_root: &Path, args: &TrainArgs) -> CmdResult<()> {
    let resolved = resolve(args)?;
    let vocab_file = load_vocab(&resolved.vocab)?;
    let instances = load_dataset(&resolved.dataset)?;
    let vocab_size = vocab_file.vocab.token_count();
    for inst in &instances {
        for &t in inst.tokens().iter() {
            if t as usize >= vocab_size {
                return Err(CmdError::Config(anyhow::anyhow!(
                    "dataset token {t} outside vocabulary (size {vocab_size})"
                )));
            }
        }
    }

    let optimizer_kind = match resolved.optimizer.as_str() {
        "sgd" => OptimizerKind::Sgd,
        _ => OptimizerKind::adam_default(),
    };
    let train_config = TrainConfig {
        learning_rate: resolved.lr,
        optimizer: optimizer_kind.clone(),
        batch_size: resolved.batch,
        steps: resolved.steps,
        grad_clip_norm: (resolved.clip > 0.0).then_some(resolved.clip),
        loss_positions: match resolved.loss.as_str() {
            "all" => LossPositions::AllContext,
            _ => LossPositions::AnswerOnly,
        },
        eval_interval: resolved.eval_interval,
        seed: resolved.seed,
        target_accuracy: resolved.target_acc,
    };
    train_config.validate().map_err(CmdError::from)?;

    let (mut params, mut optimizer, mut start_step) = match &resolved.resume {
        Some(path) => {
            let (params, meta) = crate::checkpoint::load(path)?;
            let opt = meta.optimizer.unwrap_or_else(|| {
                Optimizer::new(optimizer_kind.clone(), resolved.lr, &params.config)
            });
            (params, opt, meta.step)
        }
        None => {
            let config = ModelConfig {
                vocab_size,
                d_model: resolved.d_model,
                n_state: resolved.n_state,
                n_layers: resolved.layers,
                delta_rank: resolved.delta_rank,
                seed: resolved.model_seed,
            };
            let delta_bias = match resolved.delta_init.as_str() {
                "zero" => DeltaBiasInit::Zero,
                _ => DeltaBiasInit::default(),
            };
            let params =
                ModelParams::init_with(&config, delta_bias).map_err(CmdError::from)?;
            let opt = Optimizer::new(optimizer_kind, resolved.lr, &config);
            (params, opt, 0)
        }
    };

    let sets = eval_sets(&instances, resolved.eval_samples);
    let run = prepare_run_dir(out_root, "train", &resolved, resolved.seed)?;
    let log_path = run.file("log", "csv");
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("open {log_path:?}"))?;
    writeln!(log, "step,train_loss,eval_set,position,correct,total,accuracy")
        .map_err(anyhow::Error::from)?;

    // Drive training in eval-interval chunks so progress streams to the
    // log as it happens. The batch stream is derived per chunk from
    // (seed, start step), so a fixed config replays exactly.
    let mut history: Vec<Checkpoint> = Vec::new();
    let mut remaining = resolved.steps;
    let mut first_chunk = true;
    let mut status = TrainStatus::Completed;
    while remaining > 0 || first_chunk {
        let chunk = resolved.eval_interval.min(remaining.max(if first_chunk { 0 } else { 1 }));
        let chunk_config = TrainConfig {
            steps: chunk,
            seed: ssmlab_core::rng::mix(resolved.seed, start_step as u64),
            eval_interval: chunk.max(1),
            ..train_config.clone()
        };
        let outcome = train_loop_with(
            &chunk_config,
            params.clone(),
            optimizer,
            start_step,
            &instances,
            &sets,
        )
        .map_err(CmdError::from)?;
        optimizer = outcome.optimizer;

        for ck in &outcome.history {
            let keep = if first_chunk {
                true
            } else {
                ck.step > start_step
            };
            if keep {
                log_checkpoint(&mut log, ck).map_err(anyhow::Error::from)?;
                let summary: Vec<String> = ck
                    .eval
                    .iter()
                    .map(|c| format!("{} {:.3}", c.name, c.overall()))
                    .collect();
                eprintln!(
                    "step {:>6}  loss {:<10.5} {}",
                    ck.step,
                    ck.train_loss,
                    summary.join("  ")
                );
                history.push(ck.clone());
            }
        }
        let last = outcome.history.last().expect("non-empty history");
        params = last.params.clone();
        start_step = last.step;
        remaining = remaining.saturating_sub(chunk);
        first_chunk = false;

        match outcome.status {
            TrainStatus::Completed => {}
            TrainStatus::ReachedTarget { step } => {
                eprintln!("target accuracy reached at step {step}");
                status = TrainStatus::ReachedTarget { step };
                break;
            }
            TrainStatus::Diverged { step, reason } => {
                status = TrainStatus::Diverged { step, reason };
                break;
            }
        }
        if resolved.steps == 0 {
            break;
        }
    }
    log.flush().map_err(anyhow::Error::from)?;

    let final_ck = history.last().expect("at least the initial checkpoint");
    let ck_path = run.file("checkpoint", "ssmck");
    save(
        &ck_path,
        &final_ck.params,
        final_ck.step,
        final_ck.train_loss,
        &final_ck.eval,
        Some(&optimizer),
    )?;
    println!("{}", ck_path.display());
    println!("{}", log_path.display());

    if let TrainStatus::Diverged { step, reason } = status {
        return Err(CmdError::Numeric(anyhow::anyhow!(
            "training diverged at step {step} ({reason}); last good checkpoint saved"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commands::gen::{generate, resolve as gen_resolve, GenArgs};
    use crate::dataset::{save_dataset, save_vocab, VocabFile};

    fn tiny_inputs(dir: &Path) -> (PathBuf, PathBuf) {
        let vf = VocabFile::synthetic(6, 4, 6, 4);
        let gen_args = GenArgs {
            depths: Some(vec![2]),
            samples: Some(2),
            ..Default::default()
        };
        let ds = generate(&gen_resolve(&gen_args).unwrap(), &vf).unwrap();
        let vpath = dir.join("vocab.json");
        let dpath = dir.join("data.jsonl");
        save_vocab(&vpath, &vf).unwrap();
        save_dataset(&dpath, &ds).unwrap();
        (vpath, dpath)
    }

    fn tiny_args(vocab: PathBuf, dataset: PathBuf, steps: usize) -> TrainArgs {
        TrainArgs {
            dataset: Some(dataset),
            vocab: Some(vocab),
            d_model: Some(6),
            n_state: Some(4),
            layers: Some(1),
            delta_rank: Some(2),
            steps: Some(steps),
            batch: Some(2),
            eval_interval: Some(5),
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_writes_initial_checkpoint_only() {
        let tmp = tempfile::tempdir().unwrap();
        let (vocab, dataset) = tiny_inputs(tmp.path());
        let out = tmp.path().join("runs");
        run(&out, &tiny_args(vocab, dataset, 0)).unwrap();
        let run_dir = std::fs::read_dir(&out).unwrap().next().unwrap().unwrap();
        let files: Vec<String> = std::fs::read_dir(run_dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(files.iter().any(|f| f.starts_with("checkpoint-")));
        let ck = files.iter().find(|f| f.starts_with("checkpoint-")).unwrap();
        let (_, meta) = crate::checkpoint::load(&run_dir.path().join(ck)).unwrap();
        assert_eq!(meta.step, 0);
    }

    #[test]
    fn identical_configs_give_identical_checkpoint_bytes() {
        let tmp = tempfile::tempdir().unwrap();
        let (vocab, dataset) = tiny_inputs(tmp.path());
        let out_a = tmp.path().join("a");
        let out_b = tmp.path().join("b");
        let args = tiny_args(vocab, dataset, 10);
        run(&out_a, &args).unwrap();
        run(&out_b, &args).unwrap();
        let find = |root: &Path, prefix: &str| -> PathBuf {
            let rd = std::fs::read_dir(root).unwrap().next().unwrap().unwrap();
            std::fs::read_dir(rd.path())
                .unwrap()
                .map(|e| e.unwrap().path())
                .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with(prefix))
                .unwrap()
        };
        let ck_a = std::fs::read(find(&out_a, "checkpoint-")).unwrap();
        let ck_b = std::fs::read(find(&out_b, "checkpoint-")).unwrap();
        assert_eq!(ck_a, ck_b, "checkpoints must be byte-identical");
        let log_a = std::fs::read(find(&out_a, "log-")).unwrap();
        let log_b = std::fs::read(find(&out_b, "log-")).unwrap();
        assert_eq!(log_a, log_b, "logs must be byte-identical");
    }
}
