//! CLI surface checks: exit codes, snapshot behavior, and the guarantee
//! that an intervention with no targets reproduces the control curve
//! byte for byte.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssmlab"))
}

fn tmp(name: &str) -> PathBuf {
    let p = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn emitted(stdout: &[u8], pattern: &str) -> PathBuf {
    String::from_utf8_lossy(stdout)
        .lines()
        .map(|l| PathBuf::from(l.trim()))
        .find(|p| p.exists() && p.to_string_lossy().contains(pattern))
        .unwrap_or_else(|| panic!("no emitted file matching {pattern}"))
}

#[test]
fn missing_vocab_exits_one_without_output() {
    let root = tmp("exitcodes");
    let out = bin()
        .args(["--out-root", root.to_str().unwrap(), "gen", "--vocab", "/no/such.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(&root).unwrap().count(), 0, "no partial output");
}

#[test]
fn unknown_snapshot_subcommand_is_rejected() {
    let root = tmp("wrongsnap");
    let r = root.to_str().unwrap();
    let gen = bin().args(["--out-root", r, "gen", "--depth", "2", "--samples", "1",
        "--subjects", "4", "--relations", "3", "--objects", "4", "--distractors", "2"])
        .output()
        .unwrap();
    assert!(gen.status.success());
    let snapshot = emitted(&gen.stdout, "dataset-")
        .parent()
        .unwrap()
        .read_dir()
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains("resolved-"))
        .unwrap();
    // Feeding a gen snapshot to `train` must fail as a config error.
    let out = bin()
        .args(["--out-root", r, "train", "--config", snapshot.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn intervene_with_no_targets_matches_control_curve_bytes() {
    let root = tmp("control-bytes");
    let r = root.to_str().unwrap();
    let gen = bin()
        .args(["--out-root", r, "gen", "--depth", "4", "--mode", "both", "--samples", "4",
            "--seed", "3", "--subjects", "8", "--relations", "6", "--objects", "10",
            "--distractors", "4"])
        .output()
        .unwrap();
    assert!(gen.status.success());
    let dataset = emitted(&gen.stdout, "dataset-");
    let vocab = emitted(&gen.stdout, "vocab-");
    let train = bin()
        .args(["--out-root", r, "train",
            "--dataset", dataset.to_str().unwrap(),
            "--vocab", vocab.to_str().unwrap(),
            "--d-model", "8", "--n-state", "4", "--layers", "1", "--delta-rank", "2",
            "--steps", "0"])
        .output()
        .unwrap();
    assert!(train.status.success());
    let ck = emitted(&train.stdout, "checkpoint-");

    let curve = bin()
        .args(["--out-root", r, "analyze", "curve",
            "--checkpoint", ck.to_str().unwrap(),
            "--dataset", dataset.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(curve.status.success());
    let curve_csv = emitted(&curve.stdout, "accuracy-");

    let intervene = bin()
        .args(["--out-root", r, "analyze", "intervene",
            "--checkpoint", ck.to_str().unwrap(),
            "--dataset", dataset.to_str().unwrap(),
            "--targets", "none"])
        .output()
        .unwrap();
    assert!(intervene.status.success());
    let intervene_csv = emitted(&intervene.stdout, "accuracy-");

    assert_eq!(
        std::fs::read(&curve_csv).unwrap(),
        std::fs::read(&intervene_csv).unwrap(),
        "no-target intervention must reproduce the control curve byte-identically"
    );
}

#[test]
fn selftest_and_small_gradcheck_exit_zero() {
    let out = bin().args(["selftest"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = bin().args(["gradcheck", "--configs", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}
