//! Checkpoint file format.
//!
//! One JSON header line (config, training metadata, tensor manifest,
//! optimizer state manifest) followed by the flat tensors as little-endian
//! `f32` in declared order; optimizer first/second moments, when present,
//! follow the parameters. The loader validates the manifest against the
//! shapes implied by the model configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ssmlab_core::model::TensorSpec;
use ssmlab_core::train::{EvalCurve, Optimizer, OptimizerKind};
use ssmlab_core::{ModelConfig, ModelParams};

pub const FORMAT_TAG: &str = "ssmlab-checkpoint/1";

#[derive(Serialize, Deserialize, Clone, Debug)]
struct TensorMeta {
    name: String,
    shape: [usize; 2],
    dtype: String,
}

impl TensorMeta {
    fn from_spec(s: &TensorSpec) -> Self {
        TensorMeta {
            name: s.name.clone(),
            shape: [s.rows, s.cols],
            dtype: "f32".to_string(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct OptimizerMeta {
    kind: OptimizerKind,
    lr: f64,
    steps_taken: usize,
    /// Moment tensors (m then v), appended after the parameters.
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
struct Header {
    format: String,
    config: ModelConfig,
    step: usize,
    train_loss: f64,
    eval: Vec<EvalCurve>,
    tensors: Vec<TensorMeta>,
    optimizer: Option<OptimizerMeta>,
}

/// Everything a checkpoint carries besides the parameters.
#[derive(Clone, Debug)]
pub struct CheckpointMeta {
    pub step: usize,
    pub train_loss: f64,
    pub eval: Vec<EvalCurve>,
    pub optimizer: Option<Optimizer>,
}

fn write_f32<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for &x in data {
        w.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_f32<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .context("checkpoint truncated while reading tensor data")?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Save parameters plus training metadata; `optimizer` enables resuming.
pub fn save(
    path: &Path,
    params: &ModelParams,
    step: usize,
    train_loss: f64,
    eval: &[EvalCurve],
    optimizer: Option<&Optimizer>,
) -> Result<()> {
    let specs = ModelParams::tensor_specs(&params.config);
    let tensors: Vec<TensorMeta> = specs.iter().map(TensorMeta::from_spec).collect();
    let optimizer_meta = optimizer.map(|opt| {
        let mut moment_tensors = Vec::new();
        if !opt.m.is_empty() {
            for prefix in ["m", "v"] {
                for s in &specs {
                    moment_tensors.push(TensorMeta {
                        name: format!("{prefix}.{}", s.name),
                        shape: [s.rows, s.cols],
                        dtype: "f32".to_string(),
                    });
                }
            }
        }
        OptimizerMeta {
            kind: opt.kind.clone(),
            lr: opt.lr,
            steps_taken: opt.steps_taken,
            tensors: moment_tensors,
        }
    });
    let header = Header {
        format: FORMAT_TAG.to_string(),
        config: params.config.clone(),
        step,
        train_loss,
        eval: eval.to_vec(),
        tensors,
        optimizer: optimizer_meta,
    };

    let mut w = BufWriter::new(File::create(path).with_context(|| format!("create {path:?}"))?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (_, data) in params.tensors() {
        write_f32(&mut w, data)?;
    }
    if let Some(opt) = optimizer {
        for bank in [&opt.m, &opt.v] {
            for data in bank {
                write_f32(&mut w, data)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint, validating the manifest against the configuration.
pub fn load(path: &Path) -> Result<(ModelParams, CheckpointMeta)> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("open {path:?}"))?);
    let mut header_line = Vec::new();
    {
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)
                .context("checkpoint missing header line")?;
            if byte[0] == b'\n' {
                break;
            }
            header_line.push(byte[0]);
        }
    }
    let header: Header =
        serde_json::from_slice(&header_line).context("invalid checkpoint header")?;
    if header.format != FORMAT_TAG {
        bail!("unsupported checkpoint format `{}`", header.format);
    }
    header.config.validate().map_err(|e| anyhow::anyhow!(e))?;

    let specs = ModelParams::tensor_specs(&header.config);
    if specs.len() != header.tensors.len() {
        bail!(
            "manifest lists {} tensors, config implies {}",
            header.tensors.len(),
            specs.len()
        );
    }
    for (spec, meta) in specs.iter().zip(&header.tensors) {
        if spec.name != meta.name || [spec.rows, spec.cols] != meta.shape {
            bail!(
                "tensor mismatch: expected {} {}x{}, manifest has {} {}x{}",
                spec.name,
                spec.rows,
                spec.cols,
                meta.name,
                meta.shape[0],
                meta.shape[1]
            );
        }
        if meta.dtype != "f32" {
            bail!("unsupported dtype `{}` for {}", meta.dtype, meta.name);
        }
    }

    let mut params = ModelParams::zeros_like(&header.config);
    for (_, data) in params.tensors_mut() {
        let loaded = read_f32(&mut r, data.len())?;
        data.copy_from_slice(&loaded);
    }

    let optimizer = match &header.optimizer {
        None => None,
        Some(meta) => {
            let mut opt = Optimizer::new(meta.kind.clone(), meta.lr, &header.config);
            opt.steps_taken = meta.steps_taken;
            if !meta.tensors.is_empty() {
                let expected: usize = 2 * specs.len();
                if meta.tensors.len() != expected {
                    bail!(
                        "optimizer manifest lists {} tensors, expected {expected}",
                        meta.tensors.len()
                    );
                }
                for (i, spec) in specs.iter().enumerate() {
                    opt.m[i] = read_f32(&mut r, spec.len())?;
                }
                for (i, spec) in specs.iter().enumerate() {
                    opt.v[i] = read_f32(&mut r, spec.len())?;
                }
            }
            Some(opt)
        }
    };

    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        bail!("{} unexpected trailing bytes in checkpoint", trailing.len());
    }

    Ok((
        params,
        CheckpointMeta {
            step: header.step,
            train_loss: header.train_loss,
            eval: header.eval,
            optimizer,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssmlab_core::train::OptimizerKind;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            d_model: 4,
            n_state: 3,
            n_layers: 2,
            delta_rank: 2,
            seed: 3,
        }
    }

    #[test]
    fn round_trip_is_lossless_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ssmck");
        let params = ModelParams::init(&cfg()).unwrap();
        save(&path, &params, 5, 1.25, &[], None).unwrap();
        let (loaded, meta) = load(&path).unwrap();
        assert_eq!(meta.step, 5);
        // Bytes of a second save must match the first exactly.
        let path2 = dir.path().join("b.ssmck");
        save(&path2, &loaded, 5, 1.25, &[], None).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn optimizer_state_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.ssmck");
        let c = cfg();
        let params = ModelParams::init(&c).unwrap();
        let mut opt = Optimizer::new(OptimizerKind::adam_default(), 1e-3, &c);
        opt.steps_taken = 7;
        opt.m[0][0] = 0.5;
        opt.v[0][0] = 0.25;
        save(&path, &params, 7, 0.5, &[], Some(&opt)).unwrap();
        let (_, meta) = load(&path).unwrap();
        let loaded = meta.optimizer.unwrap();
        assert_eq!(loaded.steps_taken, 7);
        assert_eq!(loaded.m[0][0], 0.5);
        assert_eq!(loaded.v[0][0], 0.25);
        assert_eq!(loaded.kind, opt.kind);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ssmck");
        let params = ModelParams::init(&cfg()).unwrap();
        save(&path, &params, 0, 0.0, &[], None).unwrap();
        // Corrupt the header's claimed shape.
        let content = std::fs::read(&path).unwrap();
        let nl = content.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(content[..nl].to_vec()).unwrap();
        let bad = header.replace("\"shape\":[9,4]", "\"shape\":[4,9]");
        let mut out = bad.into_bytes();
        out.push(b'\n');
        out.extend_from_slice(&content[nl + 1..]);
        std::fs::write(&path, out).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ssmck");
        let params = ModelParams::init(&cfg()).unwrap();
        save(&path, &params, 0, 0.0, &[], None).unwrap();
        let content = std::fs::read(&path).unwrap();
        std::fs::write(&path, &content[..content.len() - 10]).unwrap();
        assert!(load(&path).is_err());
    }
}
