//! `ssmlab gradcheck` — central finite differences against the analytic
//! gradients on random tiny configurations. Exit code 2 on mismatch.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use rand::Rng;
use serde::Deserialize;

use ssmlab_core::task::{gen_instance, RelationMode, Vocab};
use ssmlab_core::train::{backward, loss, LossPositions};
use ssmlab_core::{rng, ModelConfig, ModelParams};

use crate::runcfg::{load_file_args, pick};
use crate::{CmdError, CmdResult};

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    /// Number of random configurations to check.
    #[arg(long)]
    pub configs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

struct GroupReport {
    name: String,
    max_rel: f64,
}

/// Check one random tiny config; returns per-tensor max relative error.
fn check_one(seed: u64, positions: LossPositions) -> CmdResult<Vec<GroupReport>> {
    let mut r = rng::seeded(seed);
    let vocab = Vocab::synthetic(4, 3, 4, 3);
    let cfg = ModelConfig {
        vocab_size: vocab.token_count(),
        d_model: r.gen_range(2..=4),
        n_state: r.gen_range(2..=3),
        n_layers: r.gen_range(1..=2),
        delta_rank: 2,
        seed,
    };
    let params = ModelParams::init(&cfg).map_err(CmdError::from)?;
    let batch = vec![
        gen_instance(&vocab, 2, 1, RelationMode::Random, 2, seed ^ 0x11).map_err(CmdError::from)?,
        gen_instance(&vocab, 2, 2, RelationMode::Repeated, 2, seed ^ 0x22)
            .map_err(CmdError::from)?,
    ];
    let (_, grads) = backward(&params, &batch, positions).map_err(CmdError::from)?;

    let batch_loss = |p: &ModelParams| -> f64 {
        batch
            .iter()
            .map(|i| loss(p, i, positions).expect("loss"))
            .sum::<f64>()
            / batch.len() as f64
    };

    let h = 1e-5;
    let mut out = Vec::new();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, d)| (n, d.to_vec()))
        .collect();
    for (ti, (name, a)) in analytic.iter().enumerate() {
        let mut max_rel = 0.0f64;
        for e in 0..a.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1[e] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1[e] -= h;
            let numeric = (batch_loss(&plus) - batch_loss(&minus)) / (2.0 * h);
            let denom = a[e].abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((a[e] - numeric).abs() / denom);
        }
        out.push(GroupReport {
            name: name.clone(),
            max_rel,
        });
    }
    Ok(out)
}

pub fn run(args: &GradcheckArgs) -> CmdResult<()> {
    let file: GradcheckArgs = load_file_args(args.config.as_deref())?;
    let configs = pick(args.configs, file.configs, 10);
    let seed = pick(args.seed, file.seed, 0);
    let tolerance = pick(args.tolerance, file.tolerance, 1e-4);

    let mut all_ok = true;
    for i in 0..configs {
        let cfg_seed = rng::mix(seed, i as u64);
        let positions = if i % 2 == 0 {
            LossPositions::AnswerOnly
        } else {
            LossPositions::AllContext
        };
        let reports = check_one(cfg_seed, positions)?;
        let worst = reports
            .iter()
            .max_by(|a, b| a.max_rel.partial_cmp(&b.max_rel).unwrap())
            .expect("non-empty");
        let ok = reports.iter().all(|g| g.max_rel < tolerance);
        all_ok &= ok;
        println!(
            "config {i:>2} ({}): {} — worst group {} rel err {:.3e}",
            match positions {
                LossPositions::AnswerOnly => "answer",
                LossPositions::AllContext => "all",
            },
            if ok { "PASS" } else { "FAIL" },
            worst.name,
            worst.max_rel
        );
        if !ok {
            for g in reports.iter().filter(|g| g.max_rel >= tolerance) {
                println!("   {}: rel err {:.3e} >= {tolerance:e}", g.name, g.max_rel);
            }
        }
    }
    if all_ok {
        println!("gradcheck: all {configs} configs within {tolerance:e}");
        Ok(())
    } else {
        Err(CmdError::Numeric(anyhow!(
            "analytic gradients disagree with finite differences"
        )))
    }
}
