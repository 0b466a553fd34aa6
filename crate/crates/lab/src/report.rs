//! CSV emission with fixed schemas.
//!
//! All floats use Rust's shortest round-trip formatting, so byte-identical
//! configs give byte-identical files. Directional expectations (the
//! qualitative claims a run is supposed to show) are flagged in their own
//! file, never hard-asserted.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use ssmlab_core::analysis::PositionalAccuracy;

/// Write `rows` under a header line; fields are joined with commas and no
/// quoting (schemas only contain safe tokens).
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {path:?}"))?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub const ACCURACY_HEADER: &str =
    "condition,relation_mode,n_distractors,init,depth,position,correct,total,accuracy,wilson_low,wilson_high";

/// Rows of the shared positional-accuracy schema for one curve.
pub fn accuracy_rows(acc: &PositionalAccuracy) -> Vec<Vec<String>> {
    (1..=acc.depth)
        .map(|k| {
            let (lo, hi) = acc.wilson(k);
            vec![
                acc.condition.intervention.clone(),
                acc.condition.relation_mode.clone(),
                acc.condition.n_distractors.to_string(),
                acc.condition.init.clone(),
                acc.depth.to_string(),
                k.to_string(),
                acc.correct[k - 1].to_string(),
                acc.total[k - 1].to_string(),
                acc.accuracy(k).to_string(),
                lo.to_string(),
                hi.to_string(),
            ]
        })
        .collect()
}

/// Emit a set of curves in the shared schema.
pub fn write_accuracy_csv(path: &Path, curves: &[PositionalAccuracy]) -> Result<()> {
    let rows: Vec<Vec<String>> = curves.iter().flat_map(accuracy_rows).collect();
    write_csv(path, ACCURACY_HEADER, &rows)
}

/// A directional expectation and whether the run satisfied it.
pub struct Directional {
    pub claim: String,
    pub expected: String,
    pub observed: String,
    pub holds: bool,
}

pub const DIRECTIONAL_HEADER: &str = "claim,expected,observed,holds";

pub fn write_directional_csv(path: &Path, items: &[Directional]) -> Result<()> {
    let rows: Vec<Vec<String>> = items
        .iter()
        .map(|d| {
            vec![
                d.claim.clone(),
                d.expected.clone(),
                d.observed.clone(),
                d.holds.to_string(),
            ]
        })
        .collect();
    write_csv(path, DIRECTIONAL_HEADER, &rows)
}

/// Log any failed expectations to stderr; reversals are reported, not
/// fatal.
pub fn print_directional(items: &[Directional]) {
    for d in items {
        if d.holds {
            eprintln!("  direction ok: {} ({})", d.claim, d.observed);
        } else {
            eprintln!(
                "  DIRECTION FLAG: {} expected {}, observed {}",
                d.claim, d.expected, d.observed
            );
        }
    }
}
