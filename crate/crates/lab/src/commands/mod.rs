//! Command implementations behind the CLI, plus shared loading/grouping
//! helpers. Each command resolves its configuration, validates inputs,
//! then prepares a run directory and emits artifacts.

pub mod analyze;
pub mod gen;
pub mod gradcheck;
pub mod selftest;
pub mod train;

use std::path::Path;

use anyhow::{bail, Context, Result};

use ssmlab_core::analysis::PositionalAccuracy;
use ssmlab_core::{ModelParams, RecallInstance};

use crate::checkpoint::{self, CheckpointMeta};
use crate::dataset::{load_vocab, VocabFile};
use crate::svg::Series;

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    checkpoint::load(path).with_context(|| format!("load checkpoint {path:?}"))
}

pub fn load_vocab_file(path: &Path) -> Result<VocabFile> {
    load_vocab(path)
}

/// Group instances by (relation mode, distractor count); all instances
/// must share one depth so curves are comparable.
pub fn group_by_condition(
    instances: &[RecallInstance],
) -> Result<Vec<(String, Vec<RecallInstance>)>> {
    let Some(first) = instances.first() else {
        bail!("dataset is empty");
    };
    let depth = first.depth;
    let mut groups: Vec<(String, Vec<RecallInstance>)> = Vec::new();
    for inst in instances {
        if inst.depth != depth {
            bail!(
                "dataset mixes depths {depth} and {}; analyses need one depth per run",
                inst.depth
            );
        }
        let key = format!("{}+n{}", inst.relation_mode.label(), inst.n_distractors);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(inst.clone()),
            None => groups.push((key, vec![inst.clone()])),
        }
    }
    Ok(groups)
}

/// Convert a curve into an SVG series with its Wilson band.
pub fn curve_series(acc: &PositionalAccuracy, label: String) -> Series {
    let points: Vec<(f64, f64)> = (1..=acc.depth)
        .map(|k| (k as f64, acc.accuracy(k)))
        .collect();
    let band: Vec<(f64, f64, f64)> = (1..=acc.depth)
        .map(|k| {
            let (lo, hi) = acc.wilson(k);
            (k as f64, lo, hi)
        })
        .collect();
    Series {
        label,
        points,
        band: Some(band),
    }
}
