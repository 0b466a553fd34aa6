//! Reproducible run directories.
//!
//! Every command resolves its configuration (CLI flag > config file >
//! default), snapshots the result as TOML next to its outputs, and names
//! the run directory and every artifact with the config hash and seed.
//! Re-running from a snapshot reproduces the outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// First eight hex chars of the SHA-256 of the canonical snapshot text.
pub fn config_hash(resolved_toml: &str) -> String {
    let digest = Sha256::digest(resolved_toml.as_bytes());
    let mut s = String::with_capacity(8);
    for b in &digest[..4] {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// A prepared run directory; artifact names carry the hash and seed.
pub struct RunDir {
    pub dir: PathBuf,
    pub hash: String,
    pub seed: u64,
}

impl RunDir {
    pub fn file(&self, stem: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stem}-{}-s{}.{ext}", self.hash, self.seed))
    }

    /// `config <hash> seed <seed>` chart footer.
    pub fn footer(&self) -> String {
        format!("config {} seed {}", self.hash, self.seed)
    }
}

/// Create `<out_root>/<kind>-<hash>-s<seed>/` and write the resolved
/// config snapshot into it.
pub fn prepare_run_dir<C: Serialize>(
    out_root: &Path,
    kind: &str,
    resolved: &C,
    seed: u64,
) -> Result<RunDir> {
    let toml_text = toml::to_string(resolved).context("serialize resolved config")?;
    let hash = config_hash(&toml_text);
    let dir = out_root.join(format!("{kind}-{hash}-s{seed}"));
    fs::create_dir_all(&dir).with_context(|| format!("create run dir {dir:?}"))?;
    let run = RunDir { dir, hash, seed };
    fs::write(run.file("resolved", "toml"), toml_text)?;
    Ok(run)
}

/// Load a partial-args struct from a TOML config file; missing file is an
/// error, `None` gives defaults.
pub fn load_file_args<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("config file {p:?}"))?;
            toml::from_str(&text).with_context(|| format!("parse config file {p:?}"))
        }
    }
}

/// CLI flag beats config file beats built-in default.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}

/// Like [`pick`] but the value is required from flag or file.
pub fn pick_required<T>(cli: Option<T>, file: Option<T>, what: &str) -> Result<T> {
    match cli.or(file) {
        Some(v) => Ok(v),
        None => bail!("missing required option `{what}` (flag or config file)"),
    }
}

/// Guard a snapshot's recorded subcommand against misuse.
pub fn check_subcommand(found: Option<&str>, expected: &str) -> Result<()> {
    if let Some(f) = found {
        if f != expected {
            bail!("config file was written by `{f}`, not `{expected}`");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Default, Debug, PartialEq)]
    struct Demo {
        a: Option<u32>,
        b: Option<String>,
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let h1 = config_hash("a = 1\n");
        let h2 = config_hash("a = 1\n");
        let h3 = config_hash("a = 2\n");
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_eq!(h1.len(), 8);
    }

    #[test]
    fn precedence_is_flag_file_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick::<u32>(None, None, 3), 3);
    }

    #[test]
    fn run_dir_names_carry_hash_and_seed() {
        let tmp = tempfile::tempdir().unwrap();
        #[derive(Serialize)]
        struct R {
            x: u32,
        }
        let run = prepare_run_dir(tmp.path(), "demo", &R { x: 5 }, 9).unwrap();
        assert!(run.dir.file_name().unwrap().to_str().unwrap().starts_with("demo-"));
        assert!(run.file("out", "csv").to_str().unwrap().ends_with(&format!(
            "out-{}-s9.csv",
            run.hash
        )));
        assert!(run.file("resolved", "toml").exists());
    }

    #[test]
    fn missing_config_file_is_an_error() {
        let r: Result<Demo> = load_file_args(Some(Path::new("/no/such/file.toml")));
        assert!(r.is_err());
    }
}
