//! Dataset and vocabulary files.
//!
//! Datasets are JSON Lines: one instance object per line, self-describing
//! (token ids plus depth, position, mode, distractor count, and seed). The
//! vocabulary sidecar maps token ids to display strings for human-readable
//! dumps.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ssmlab_core::task::TokenId;
use ssmlab_core::{RecallInstance, Vocab};

/// Vocabulary plus display names, as stored on disk.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct VocabFile {
    pub vocab: Vocab,
    /// Token id (stringified for JSON) to display string.
    pub display: BTreeMap<String, String>,
}

impl VocabFile {
    /// Synthetic vocabulary with generated display names
    /// (`s00`, `r00`, `o00`, `d00`, and `.` for the separator).
    pub fn synthetic(
        n_subjects: usize,
        n_relations: usize,
        n_objects: usize,
        n_distractors: usize,
    ) -> VocabFile {
        let vocab = Vocab::synthetic(n_subjects, n_relations, n_objects, n_distractors);
        let mut display = BTreeMap::new();
        display.insert(vocab.separator.to_string(), ".".to_string());
        let pools: [(&str, &Vec<TokenId>); 4] = [
            ("s", &vocab.subjects),
            ("r", &vocab.relations),
            ("o", &vocab.objects),
            ("d", &vocab.distractor_pool),
        ];
        for (prefix, pool) in pools {
            for (i, &t) in pool.iter().enumerate() {
                display.insert(t.to_string(), format!("{prefix}{i:02}"));
            }
        }
        VocabFile { vocab, display }
    }

    /// Render a token sequence with display names.
    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|t| {
                self.display
                    .get(&t.to_string())
                    .cloned()
                    .unwrap_or_else(|| format!("<{t}>"))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn save_vocab(path: &Path, vf: &VocabFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {path:?}"))?);
    serde_json::to_writer_pretty(&mut w, vf)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_vocab(path: &Path) -> Result<VocabFile> {
    let f = File::open(path).with_context(|| format!("vocab file {path:?}"))?;
    let vf: VocabFile = serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parse vocab file {path:?}"))?;
    vf.vocab.validate().map_err(|e| anyhow::anyhow!(e))?;
    Ok(vf)
}

pub fn save_dataset(path: &Path, instances: &[RecallInstance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {path:?}"))?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<RecallInstance>> {
    let f = File::open(path).with_context(|| format!("dataset file {path:?}"))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: RecallInstance = serde_json::from_str(&line)
            .with_context(|| format!("parse {path:?} line {}", lineno + 1))?;
        out.push(inst);
    }
    if out.is_empty() {
        bail!("dataset {path:?} contains no instances");
    }
    Ok(out)
}
