//! `ssmlab gen` — dataset and vocabulary generation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};


use clap::Args;
use serde::{Deserialize, Serialize};

use ssmlab_core::rng;
use ssmlab_core::task::{gen_dataset_with_distractors, RelationMode};
use ssmlab_core::RecallInstance;

use crate::dataset::{load_vocab, save_dataset, save_vocab, VocabFile};
use crate::runcfg::{check_subcommand, load_file_args, pick, prepare_run_dir};
use crate::{CmdError, CmdResult};

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct GenArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Context depth L; repeat the flag for several depths.
    #[arg(long = "depth")]
    pub depths: Option<Vec<usize>>,
    /// repeated | random | both
    #[arg(long)]
    pub mode: Option<String>,
    /// Instances per target position.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub n_distractors: Option<usize>,
    /// Existing vocabulary file (omit to synthesize one).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub objects: Option<usize>,
    #[arg(long)]
    pub distractors: Option<usize>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct GenResolved {
    pub subcommand: String,
    pub seed: u64,
    pub depths: Vec<usize>,
    pub mode: String,
    pub samples: usize,
    pub n_distractors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    pub subjects: usize,
    pub relations: usize,
    pub objects: usize,
    pub distractors: usize,
}

pub fn resolve(args: &GenArgs) -> CmdResult<GenResolved> {
    let file: GenArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "gen")?;
    let resolved = GenResolved {
        subcommand: "gen".to_string(),
        seed: pick(args.seed, file.seed, 1),
        depths: pick(args.depths.clone(), file.depths, vec![8]),
        mode: pick(args.mode.clone(), file.mode, "repeated".to_string()),
        samples: pick(args.samples, file.samples, 50),
        n_distractors: pick(args.n_distractors, file.n_distractors, 0),
        vocab: args.vocab.clone().or(file.vocab),
        subjects: pick(args.subjects, file.subjects, 20),
        relations: pick(args.relations, file.relations, 18),
        objects: pick(args.objects, file.objects, 26),
        distractors: pick(args.distractors, file.distractors, 16),
    };
    match resolved.mode.as_str() {
        "repeated" | "random" | "both" => {}
        other => {
            return Err(CmdError::Config(anyhow::anyhow!(
                "mode must be repeated, random, or both; got `{other}`"
            )))
        }
    }
    Ok(resolved)
}

fn modes_of(resolved: &GenResolved) -> Vec<RelationMode> {
    match resolved.mode.as_str() {
        "repeated" => vec![RelationMode::Repeated],
        "random" => vec![RelationMode::Random],
        _ => vec![RelationMode::Repeated, RelationMode::Random],
    }
}

/// Generate the instances a resolved config describes (shared with the
/// training command's internal dataset checks and the tests).
pub fn generate(resolved: &GenResolved, vocab_file: &VocabFile) -> CmdResult<Vec<RecallInstance>> {
    let modes = modes_of(resolved);
    let mut all: Vec<RecallInstance> = Vec::new();
    for (mi, mode) in modes.iter().enumerate() {
        // Separate top-level seeds per mode keep `both` collision-free.
        let mode_seed = if modes.len() == 1 {
            resolved.seed
        } else {
            rng::mix(resolved.seed, mi as u64 + 1)
        };
        let ds = gen_dataset_with_distractors(
            &vocab_file.vocab,
            &resolved.depths,
            resolved.samples,
            *mode,
            resolved.n_distractors,
            mode_seed,
        )?;
        all.extend(ds);
    }
    let mut seen = HashSet::new();
    for inst in &all {
        if !seen.insert(inst.tokens()) {
            return Err(CmdError::Config(anyhow::anyhow!(
                "cross-mode uniqueness collision; choose a different seed"
            )));
        }
    }
    Ok(all)
}

pub fn run(out_root: &Path, args: &GenArgs) -> CmdResult<()> {
    let resolved = resolve(args)?;
    // Inputs are validated before any output is written.
    let vocab_file = match &resolved.vocab {
        Some(path) => load_vocab(path)?,
        None => {
            let vf = VocabFile::synthetic(
                resolved.subjects,
                resolved.relations,
                resolved.objects,
                resolved.distractors,
            );
            vf.vocab.validate().map_err(anyhow::Error::from)?;
            vf
        }
    };
    let instances = generate(&resolved, &vocab_file)?;

    let run = prepare_run_dir(out_root, "gen", &resolved, resolved.seed)?;
    let vocab_path = run.file("vocab", "json");
    let data_path = run.file("dataset", "jsonl");
    save_vocab(&vocab_path, &vocab_file)?;
    save_dataset(&data_path, &instances)?;
    println!("{}", vocab_path.display());
    println!("{}", data_path.display());
    eprintln!(
        "gen: {} instances ({} mode, depths {:?}) -> {}",
        instances.len(),
        resolved.mode,
        resolved.depths,
        run.dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_depth_eight_with_fifty_samples_gives_400() {
        let resolved = resolve(&GenArgs::default()).unwrap();
        let vf = VocabFile::synthetic(20, 18, 26, 16);
        let ds = generate(&resolved, &vf).unwrap();
        assert_eq!(ds.len(), 400);
    }

    #[test]
    fn both_modes_double_the_count() {
        let args = GenArgs {
            mode: Some("both".into()),
            samples: Some(2),
            ..Default::default()
        };
        let resolved = resolve(&args).unwrap();
        let vf = VocabFile::synthetic(20, 18, 26, 16);
        let ds = generate(&resolved, &vf).unwrap();
        assert_eq!(ds.len(), 2 * 8 * 2);
    }

    #[test]
    fn bad_mode_is_a_config_error() {
        let args = GenArgs {
            mode: Some("weird".into()),
            ..Default::default()
        };
        assert!(matches!(resolve(&args), Err(CmdError::Config(_))));
    }

    #[test]
    fn missing_vocab_file_fails_before_output() {
        let tmp = tempfile::tempdir().unwrap();
        let args = GenArgs {
            vocab: Some(PathBuf::from("/no/such/vocab.json")),
            ..Default::default()
        };
        let err = run(tmp.path(), &args).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        // No partial output.
        assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
    }
}
