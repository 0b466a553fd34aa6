//! `ssmlab analyze` — positional-accuracy curves, long-term-memory
//! identification, causal interventions, distractor sweeps, delta/kernel
//! periodicity studies, hidden-init sweeps, and the threshold grid.
//!
//! Every subcommand emits labeled CSVs plus an SVG chart into its own run
//! directory, along with the resolved config snapshot. Directional
//! expectations are flagged in `directional-*.csv`, never hard-asserted.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::Args;
use serde::{Deserialize, Serialize};

use ssmlab_core::analysis::{
    delta_period_scan, distractor_sweep, eval_recall_curve, identify_ltm, kernel_profile,
    InterventionSpec, LtmReport, PositionalAccuracy, ProbeMode,
};
use ssmlab_core::scan::{forward, GateTrace, HiddenInit};
use ssmlab_core::task::VALID_PERIODS;
use ssmlab_core::{rng, ModelParams, RecallInstance};

use crate::commands::{curve_series, group_by_condition, load_checkpoint, load_vocab_file};
use crate::dataset::load_dataset;
use crate::report::{
    print_directional, write_accuracy_csv, write_csv, write_directional_csv, Directional,
};
use crate::runcfg::{check_subcommand, load_file_args, pick, pick_required, prepare_run_dir, RunDir};
use crate::svg::{bar_chart, heatmap_grid, line_chart, ChartMeta, HeatPanel, Series};
use crate::{CmdError, CmdResult};

fn parse_init(init: &str, init_seed: u64) -> CmdResult<HiddenInit> {
    if init == "zero" {
        return Ok(HiddenInit::Zero);
    }
    if let Some(layer) = init.strip_prefix("uniform:") {
        let layer: usize = layer
            .parse()
            .map_err(|_| CmdError::Config(anyhow!("bad init layer in `{init}`")))?;
        return Ok(HiddenInit::UniformPerLayer {
            layer,
            seed: init_seed,
        });
    }
    Err(CmdError::Config(anyhow!(
        "init must be `zero` or `uniform:<layer>`, got `{init}`"
    )))
}

/// Parse a half-open token span like `0..4`.
fn parse_span(span: &str) -> CmdResult<Vec<usize>> {
    let (a, b) = span
        .split_once("..")
        .ok_or_else(|| CmdError::Config(anyhow!("span must look like `0..4`, got `{span}`")))?;
    let a: usize = a
        .parse()
        .map_err(|_| CmdError::Config(anyhow!("bad span start in `{span}`")))?;
    let b: usize = b
        .parse()
        .map_err(|_| CmdError::Config(anyhow!("bad span end in `{span}`")))?;
    if b <= a {
        return Err(CmdError::Config(anyhow!("empty span `{span}`")));
    }
    Ok((a..b).collect())
}

/// Capture traces of a probe set with a shared depth; returns the traces
/// and the context length used as the memory-coefficient horizon.
fn probe_traces(
    params: &ModelParams,
    instances: &[RecallInstance],
    samples: usize,
) -> CmdResult<(Vec<GateTrace>, usize)> {
    let Some(first) = instances.first() else {
        return Err(CmdError::Config(anyhow!("dataset is empty")));
    };
    let depth = first.depth;
    let probe: Vec<&RecallInstance> = instances
        .iter()
        .filter(|i| i.depth == depth)
        .take(samples)
        .collect();
    let t_end = probe[0].context_len();
    let mut traces = Vec::with_capacity(probe.len());
    for inst in probe {
        let (_, trace) = forward(params, &inst.tokens(), &HiddenInit::Zero, true)
            .map_err(CmdError::from)?;
        traces.push(trace.expect("capture requested"));
    }
    Ok((traces, t_end))
}

// ---------------------------------------------------------------------------
// analyze curve
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct CurveArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// zero | uniform:<layer>
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct CurveResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub init: String,
    pub init_seed: u64,
    pub seed: u64,
}

pub fn resolve_curve(args: &CurveArgs) -> CmdResult<CurveResolved> {
    let file: CurveArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-curve")?;
    Ok(CurveResolved {
        subcommand: "analyze-curve".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        init: pick(args.init.clone(), file.init, "zero".to_string()),
        init_seed: pick(args.init_seed, file.init_seed, 1),
        seed: pick(args.seed, file.seed, 1),
    })
}

pub fn run_curve(out_root: &Path, args: &CurveArgs) -> CmdResult<()> {
    let resolved = resolve_curve(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let instances = load_dataset(&resolved.dataset)?;
    let init = parse_init(&resolved.init, resolved.init_seed)?;
    let groups = group_by_condition(&instances)?;
    let mut curves = Vec::new();
    for (_, group) in &groups {
        curves.push(eval_recall_curve(&params, group, None, &init).map_err(CmdError::from)?);
    }

    let run = prepare_run_dir(out_root, "analyze-curve", &resolved, resolved.seed)?;
    emit_accuracy(&run, "accuracy", "curve", "Recall accuracy by position", &curves)?;
    Ok(())
}

/// Shared CSV + SVG emission for positional-accuracy analyses.
fn emit_accuracy(
    run: &RunDir,
    csv_stem: &str,
    svg_stem: &str,
    title: &str,
    curves: &[PositionalAccuracy],
) -> CmdResult<()> {
    let csv_path = run.file(csv_stem, "csv");
    write_accuracy_csv(&csv_path, curves)?;
    let series: Vec<Series> = curves
        .iter()
        .map(|c| {
            let label = format!(
                "{} n={} {} init={}",
                c.condition.relation_mode,
                c.condition.n_distractors,
                c.condition.intervention,
                c.condition.init
            );
            curve_series(c, label)
        })
        .collect();
    let svg_path = run.file(svg_stem, "svg");
    let chart = line_chart(
        &ChartMeta {
            title: title.to_string(),
            x_label: "target position k".to_string(),
            y_label: "recall accuracy".to_string(),
            footer: run.footer(),
        },
        &series,
    );
    std::fs::write(&svg_path, chart).map_err(CmdError::from)?;
    println!("{}", csv_path.display());
    println!("{}", svg_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze ltm
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct LtmArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Probe instances for the identification pass.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub probe_samples: Option<usize>,
    /// averaged | single
    #[arg(long)]
    pub probe_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct LtmResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub tau: f64,
    pub p: f64,
    pub probe_samples: usize,
    pub probe_mode: String,
    pub seed: u64,
}

pub fn resolve_ltm(args: &LtmArgs) -> CmdResult<LtmResolved> {
    let file: LtmArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-ltm")?;
    let resolved = LtmResolved {
        subcommand: "analyze-ltm".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        tau: pick(args.tau, file.tau, 0.7),
        p: pick(args.p, file.p, 0.7),
        probe_samples: pick(args.probe_samples, file.probe_samples, 16),
        probe_mode: pick(args.probe_mode.clone(), file.probe_mode, "averaged".to_string()),
        seed: pick(args.seed, file.seed, 1),
    };
    match resolved.probe_mode.as_str() {
        "averaged" | "single" => {}
        other => {
            return Err(CmdError::Config(anyhow!(
                "probe_mode must be averaged or single, got `{other}`"
            )))
        }
    }
    Ok(resolved)
}

fn ltm_rows(report: &LtmReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (layer, channels) in report.per_layer.iter().enumerate() {
        for ch in channels {
            rows.push(vec![
                layer.to_string(),
                ch.channel.to_string(),
                ch.probability.to_string(),
            ]);
        }
    }
    rows
}

pub fn run_ltm(out_root: &Path, args: &LtmArgs) -> CmdResult<()> {
    let resolved = resolve_ltm(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let instances = load_dataset(&resolved.dataset)?;
    let mode = if resolved.probe_mode == "single" {
        ProbeMode::Single
    } else {
        ProbeMode::Averaged
    };
    let (traces, t_end) = probe_traces(&params, &instances, resolved.probe_samples)?;
    let report = identify_ltm(&traces, t_end, resolved.tau, resolved.p, mode)
        .map_err(CmdError::from)?;

    let run = prepare_run_dir(out_root, "analyze-ltm", &resolved, resolved.seed)?;
    let json_path = run.file("ltm", "json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n")?;
    let csv_path = run.file("ltm-channels", "csv");
    write_csv(&csv_path, "layer,channel,probability", &ltm_rows(&report))?;

    let densities = report.densities();
    let labels: Vec<String> = (0..densities.len()).map(|l| format!("L{l}")).collect();
    let values: Vec<f64> = densities.iter().map(|&d| d as f64).collect();
    let svg_path = run.file("ltm-density", "svg");
    let chart = bar_chart(
        &ChartMeta {
            title: format!(
                "Long-term-memory channels per layer (tau={}, p={})",
                resolved.tau, resolved.p
            ),
            x_label: "layer".to_string(),
            y_label: "qualifying channels".to_string(),
            footer: run.footer(),
        },
        &labels,
        &values,
    );
    std::fs::write(&svg_path, chart)?;

    println!("{}", json_path.display());
    println!("{}", csv_path.display());
    println!("{}", svg_path.display());
    eprintln!(
        "ltm: densities {:?}, total {} channels",
        densities,
        report.total_channels()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze intervene
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct InterveneArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Path to an `ltm-*.json` report, or `none` for control only.
    #[arg(long)]
    pub targets: Option<String>,
    /// Ablated token span, e.g. `0..4` (the first triple).
    #[arg(long)]
    pub span: Option<String>,
    /// Intervene on this many densest layers from the report.
    #[arg(long)]
    pub top_layers: Option<usize>,
    #[arg(long)]
    pub baseline_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct InterveneResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub targets: String,
    pub span: String,
    pub top_layers: usize,
    pub baseline_seed: u64,
    pub seed: u64,
}

pub fn resolve_intervene(args: &InterveneArgs) -> CmdResult<InterveneResolved> {
    let file: InterveneArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-intervene")?;
    Ok(InterveneResolved {
        subcommand: "analyze-intervene".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        targets: pick(args.targets.clone(), file.targets, "none".to_string()),
        span: pick(args.span.clone(), file.span, "0..4".to_string()),
        top_layers: pick(args.top_layers, file.top_layers, 3),
        baseline_seed: pick(args.baseline_seed, file.baseline_seed, 1),
        seed: pick(args.seed, file.seed, 1),
    })
}

pub fn run_intervene(out_root: &Path, args: &InterveneArgs) -> CmdResult<()> {
    let resolved = resolve_intervene(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let instances = load_dataset(&resolved.dataset)?;
    let timesteps = parse_span(&resolved.span)?;
    let groups = group_by_condition(&instances)?;

    let specs: Option<(InterventionSpec, InterventionSpec)> = if resolved.targets == "none" {
        None
    } else {
        let text = std::fs::read_to_string(&resolved.targets)
            .map_err(|e| CmdError::Config(anyhow!("targets file {}: {e}", resolved.targets)))?;
        let report: LtmReport = serde_json::from_str(&text)
            .map_err(|e| CmdError::Config(anyhow!("parse targets file: {e}")))?;
        let targets = report.targets(resolved.top_layers);
        let targeted = InterventionSpec::zero_a(targets, timesteps.clone());
        let random = targeted.random_baseline(resolved.baseline_seed);
        Some((targeted, random))
    };

    let mut curves = Vec::new();
    let mut directional = Vec::new();
    for (key, group) in &groups {
        let control =
            eval_recall_curve(&params, group, None, &HiddenInit::Zero).map_err(CmdError::from)?;
        if let Some((targeted_spec, random_spec)) = &specs {
            let targeted = eval_recall_curve(&params, group, Some(targeted_spec), &HiddenInit::Zero)
                .map_err(CmdError::from)?;
            let random = eval_recall_curve(&params, group, Some(random_spec), &HiddenInit::Zero)
                .map_err(CmdError::from)?;
            let drop_targeted = control.accuracy(1) - targeted.accuracy(1);
            let drop_random = control.accuracy(1) - random.accuracy(1);
            directional.push(Directional {
                claim: format!("{key}: targeted first-position drop exceeds random baseline"),
                expected: "drop_targeted > drop_random".to_string(),
                observed: format!(
                    "drop_targeted={drop_targeted} drop_random={drop_random}"
                ),
                holds: drop_targeted > drop_random,
            });
            curves.push(control);
            curves.push(targeted);
            curves.push(random);
        } else {
            curves.push(control);
        }
    }

    let run = prepare_run_dir(out_root, "analyze-intervene", &resolved, resolved.seed)?;
    emit_accuracy(
        &run,
        "accuracy",
        "intervene",
        "Recall accuracy under gate ablation",
        &curves,
    )?;
    if !directional.is_empty() {
        let dir_path = run.file("directional", "csv");
        write_directional_csv(&dir_path, &directional)?;
        print_directional(&directional);
        println!("{}", dir_path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze distract
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct DistractArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Distractor counts; repeat the flag (e.g. --n 0 --n 4 --n 16).
    #[arg(long = "n")]
    pub counts: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct DistractResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub vocab: PathBuf,
    pub counts: Vec<usize>,
    pub seed: u64,
}

pub fn resolve_distract(args: &DistractArgs) -> CmdResult<DistractResolved> {
    let file: DistractArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-distract")?;
    Ok(DistractResolved {
        subcommand: "analyze-distract".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        vocab: pick_required(args.vocab.clone(), file.vocab, "vocab")?,
        counts: pick(args.counts.clone(), file.counts, vec![0, 4, 16]),
        seed: pick(args.seed, file.seed, 1),
    })
}

fn late_accuracy(acc: &PositionalAccuracy) -> f64 {
    let from = acc.depth.saturating_sub(2).max(1);
    let ks: Vec<usize> = (from..=acc.depth).collect();
    ks.iter().map(|&k| acc.accuracy(k)).sum::<f64>() / ks.len() as f64
}

pub fn run_distract(out_root: &Path, args: &DistractArgs) -> CmdResult<()> {
    let resolved = resolve_distract(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let vocab_file = load_vocab_file(&resolved.vocab)?;
    let instances = load_dataset(&resolved.dataset)?;
    let groups = group_by_condition(&instances)?;

    let mut curves = Vec::new();
    let mut directional = Vec::new();
    for (key, group) in &groups {
        let sweep = distractor_sweep(&params, &vocab_file.vocab, group, &resolved.counts)
            .map_err(CmdError::from)?;
        for pair in sweep.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (la, lb) = (late_accuracy(a), late_accuracy(b));
            directional.push(Directional {
                claim: format!(
                    "{key}: late-position accuracy non-increasing from n={} to n={}",
                    a.condition.n_distractors, b.condition.n_distractors
                ),
                expected: "late(n_low) >= late(n_high)".to_string(),
                observed: format!("late({})={la} late({})={lb}",
                    a.condition.n_distractors, b.condition.n_distractors),
                holds: la >= lb,
            });
        }
        curves.extend(sweep);
    }

    let run = prepare_run_dir(out_root, "analyze-distract", &resolved, resolved.seed)?;
    emit_accuracy(
        &run,
        "accuracy",
        "distract",
        "Recall accuracy under distractor insertion",
        &curves,
    )?;
    let dir_path = run.file("directional", "csv");
    write_directional_csv(&dir_path, &directional)?;
    print_directional(&directional);
    println!("{}", dir_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze delta / kernel
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Repetition periods; repeat the flag.
    #[arg(long = "period")]
    pub periods: Option<Vec<usize>>,
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct DeltaResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub periods: Vec<usize>,
    pub n_seeds: usize,
    pub seed: u64,
}

fn resolve_periodic(
    args: &DeltaArgs,
    subcommand: &str,
) -> CmdResult<DeltaResolved> {
    let file: DeltaArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), subcommand)?;
    let resolved = DeltaResolved {
        subcommand: subcommand.to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        vocab: pick_required(args.vocab.clone(), file.vocab, "vocab")?,
        periods: pick(args.periods.clone(), file.periods, VALID_PERIODS.to_vec()),
        n_seeds: pick(args.n_seeds, file.n_seeds, 8),
        seed: pick(args.seed, file.seed, 1),
    };
    if resolved.n_seeds == 0 {
        return Err(CmdError::Config(anyhow!("n_seeds must be >= 1")));
    }
    Ok(resolved)
}

fn probe_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| rng::mix(seed, 0x5eed + i as u64)).collect()
}

pub fn run_delta(out_root: &Path, args: &DeltaArgs) -> CmdResult<()> {
    let resolved = resolve_periodic(args, "analyze-delta")?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let vocab_file = load_vocab_file(&resolved.vocab)?;
    let seeds = probe_seeds(resolved.seed, resolved.n_seeds);
    let stats = delta_period_scan(&params, &vocab_file.vocab, &resolved.periods, &seeds)
        .map_err(CmdError::from)?;

    let run = prepare_run_dir(out_root, "analyze-delta", &resolved, resolved.seed)?;

    let global_rows: Vec<Vec<String>> = stats
        .periods
        .iter()
        .map(|p| vec![p.period.to_string(), p.global_mean.to_string()])
        .collect();
    let global_csv = run.file("delta-global", "csv");
    write_csv(&global_csv, "period,global_mean_delta", &global_rows)?;

    let mut map_rows = Vec::new();
    for p in &stats.periods {
        for layer in 0..p.per_layer_position.rows() {
            for t in 0..p.per_layer_position.cols() {
                map_rows.push(vec![
                    p.period.to_string(),
                    layer.to_string(),
                    (t + 1).to_string(),
                    p.per_layer_position.at(layer, t).to_string(),
                ]);
            }
        }
    }
    let map_csv = run.file("delta-map", "csv");
    write_csv(&map_csv, "period,layer,position,mean_delta", &map_rows)?;

    let mut ac_rows = Vec::new();
    for p in &stats.periods {
        for (layer, ac) in p.autocorr.iter().enumerate() {
            for (lag, &v) in ac.iter().enumerate() {
                ac_rows.push(vec![
                    p.period.to_string(),
                    layer.to_string(),
                    lag.to_string(),
                    v.to_string(),
                ]);
            }
        }
    }
    let ac_csv = run.file("delta-autocorr", "csv");
    write_csv(&ac_csv, "period,layer,lag,autocorrelation", &ac_rows)?;

    // Global-mean line chart.
    let series = vec![Series {
        label: "mean delta".to_string(),
        points: stats
            .periods
            .iter()
            .map(|p| (p.period as f64, p.global_mean))
            .collect(),
        band: None,
    }];
    let global_svg = run.file("delta-global", "svg");
    std::fs::write(
        &global_svg,
        line_chart(
            &ChartMeta {
                title: "Mean step-size gate vs repetition period".to_string(),
                x_label: "repetition period".to_string(),
                y_label: "mean delta".to_string(),
                footer: run.footer(),
            },
            &series,
        ),
    )?;

    // Per-period heatmap panels (layers x positions).
    let panels: Vec<HeatPanel> = stats
        .periods
        .iter()
        .map(|p| HeatPanel {
            title: format!("period {}", p.period),
            rows: p.per_layer_position.rows(),
            cols: p.per_layer_position.cols(),
            values: p.per_layer_position.data().to_vec(),
            row_labels: (0..p.per_layer_position.rows())
                .map(|l| format!("L{l}"))
                .collect(),
        })
        .collect();
    let map_svg = run.file("delta-map", "svg");
    std::fs::write(
        &map_svg,
        heatmap_grid(
            &ChartMeta {
                title: "Mean delta per layer across positions".to_string(),
                x_label: "position (1..64)".to_string(),
                y_label: "layer".to_string(),
                footer: run.footer(),
            },
            &panels,
        ),
    )?;

    let mut directional = Vec::new();
    for pair in stats.periods.windows(2) {
        directional.push(Directional {
            claim: format!(
                "mean delta non-decreasing from period {} to {}",
                pair[0].period, pair[1].period
            ),
            expected: "mean(low period) <= mean(high period)".to_string(),
            observed: format!("{} vs {}", pair[0].global_mean, pair[1].global_mean),
            holds: pair[0].global_mean <= pair[1].global_mean,
        });
    }
    let dir_path = run.file("directional", "csv");
    write_directional_csv(&dir_path, &directional)?;
    print_directional(&directional);

    for p in [&global_csv, &map_csv, &ac_csv, &global_svg, &map_svg, &dir_path] {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn run_kernel(out_root: &Path, args: &DeltaArgs) -> CmdResult<()> {
    let resolved = resolve_periodic(args, "analyze-kernel")?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let vocab_file = load_vocab_file(&resolved.vocab)?;
    let seeds = probe_seeds(resolved.seed, resolved.n_seeds);
    let profiles = kernel_profile(&params, &vocab_file.vocab, &resolved.periods, &seeds)
        .map_err(CmdError::from)?;

    let run = prepare_run_dir(out_root, "analyze-kernel", &resolved, resolved.seed)?;
    let mut rows = Vec::new();
    for (period, profile) in &profiles {
        for (t, &v) in profile.iter().enumerate() {
            rows.push(vec![period.to_string(), (t + 1).to_string(), v.to_string()]);
        }
    }
    let csv_path = run.file("kernel", "csv");
    write_csv(&csv_path, "period,position,mean_abs_kernel_weight", &rows)?;

    let series: Vec<Series> = profiles
        .iter()
        .map(|(period, profile)| Series {
            label: format!("period {period}"),
            points: profile
                .iter()
                .enumerate()
                .map(|(t, &v)| ((t + 1) as f64, v.max(1e-300).log10()))
                .collect(),
            band: None,
        })
        .collect();
    let svg_path = run.file("kernel", "svg");
    std::fs::write(
        &svg_path,
        line_chart(
            &ChartMeta {
                title: "Kernel magnitude from each position to the final token".to_string(),
                x_label: "input position".to_string(),
                y_label: "log10 mean |kernel weight|".to_string(),
                footer: run.footer(),
            },
            &series,
        ),
    )?;
    println!("{}", csv_path.display());
    println!("{}", svg_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze init-sweep
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct InitSweepArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Layers to sweep; repeat the flag (default: every layer).
    #[arg(long = "layer")]
    pub layers: Option<Vec<usize>>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct InitSweepResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<usize>>,
    pub init_seed: u64,
    pub seed: u64,
}

pub fn resolve_init_sweep(args: &InitSweepArgs) -> CmdResult<InitSweepResolved> {
    let file: InitSweepArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-init-sweep")?;
    Ok(InitSweepResolved {
        subcommand: "analyze-init-sweep".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        layers: args.layers.clone().or(file.layers),
        init_seed: pick(args.init_seed, file.init_seed, 1),
        seed: pick(args.seed, file.seed, 1),
    })
}

pub fn run_init_sweep(out_root: &Path, args: &InitSweepArgs) -> CmdResult<()> {
    let resolved = resolve_init_sweep(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let instances = load_dataset(&resolved.dataset)?;
    let groups = group_by_condition(&instances)?;
    let layers: Vec<usize> = match &resolved.layers {
        Some(ls) => {
            for &l in ls {
                if l >= params.config.n_layers {
                    return Err(CmdError::Config(anyhow!(
                        "layer {l} out of range ({} layers)",
                        params.config.n_layers
                    )));
                }
            }
            ls.clone()
        }
        None => (0..params.config.n_layers).collect(),
    };

    let mut curves = Vec::new();
    for (_, group) in &groups {
        curves.push(
            eval_recall_curve(&params, group, None, &HiddenInit::Zero).map_err(CmdError::from)?,
        );
        for &layer in &layers {
            let init = HiddenInit::UniformPerLayer {
                layer,
                seed: resolved.init_seed,
            };
            curves.push(eval_recall_curve(&params, group, None, &init).map_err(CmdError::from)?);
        }
    }

    let run = prepare_run_dir(out_root, "analyze-init-sweep", &resolved, resolved.seed)?;
    emit_accuracy(
        &run,
        "accuracy",
        "init-sweep",
        "Recall accuracy under per-layer uniform state initialization",
        &curves,
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze grid
// ---------------------------------------------------------------------------

#[derive(Args, Deserialize, Default, Clone, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct GridArgs {
    /// TOML config file supplying defaults for any flag.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(skip)]
    pub subcommand: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Threshold grid values; repeat the flag.
    #[arg(long = "tau")]
    pub taus: Option<Vec<f64>>,
    /// Cut-off grid values; repeat the flag.
    #[arg(long = "p")]
    pub ps: Option<Vec<f64>>,
    #[arg(long)]
    pub top_layers: Option<usize>,
    #[arg(long)]
    pub probe_samples: Option<usize>,
    #[arg(long)]
    pub span: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct GridResolved {
    pub subcommand: String,
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub taus: Vec<f64>,
    pub ps: Vec<f64>,
    pub top_layers: usize,
    pub probe_samples: usize,
    pub span: String,
    pub seed: u64,
}

pub fn resolve_grid(args: &GridArgs) -> CmdResult<GridResolved> {
    let file: GridArgs = load_file_args(args.config.as_deref())?;
    check_subcommand(file.subcommand.as_deref(), "analyze-grid")?;
    Ok(GridResolved {
        subcommand: "analyze-grid".to_string(),
        checkpoint: pick_required(args.checkpoint.clone(), file.checkpoint, "checkpoint")?,
        dataset: pick_required(args.dataset.clone(), file.dataset, "dataset")?,
        taus: pick(args.taus.clone(), file.taus, vec![0.5, 0.7, 0.9]),
        ps: pick(args.ps.clone(), file.ps, vec![0.5, 0.7, 0.9]),
        top_layers: pick(args.top_layers, file.top_layers, 1),
        probe_samples: pick(args.probe_samples, file.probe_samples, 16),
        span: pick(args.span.clone(), file.span, "0..4".to_string()),
        seed: pick(args.seed, file.seed, 1),
    })
}

pub fn run_grid(out_root: &Path, args: &GridArgs) -> CmdResult<()> {
    let resolved = resolve_grid(args)?;
    let (params, _) = load_checkpoint(&resolved.checkpoint)?;
    let instances = load_dataset(&resolved.dataset)?;
    let timesteps = parse_span(&resolved.span)?;
    let groups = group_by_condition(&instances)?;
    let (traces, t_end) = probe_traces(&params, &instances, resolved.probe_samples)?;

    // One identification per grid cell.
    let mut reports: Vec<(f64, f64, LtmReport)> = Vec::new();
    for &tau in &resolved.taus {
        for &p in &resolved.ps {
            let report = identify_ltm(&traces, t_end, tau, p, ProbeMode::Averaged)
                .map_err(CmdError::from)?;
            reports.push((tau, p, report));
        }
    }

    // Nesting along both grid axes.
    let selected = |tau: f64, p: f64| -> BTreeSet<(usize, usize)> {
        reports
            .iter()
            .find(|(t, q, _)| *t == tau && *q == p)
            .map(|(_, _, r)| r.selected_set())
            .unwrap_or_default()
    };
    let mut directional = Vec::new();
    let mut sorted_taus = resolved.taus.clone();
    sorted_taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sorted_ps = resolved.ps.clone();
    sorted_ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &tau in &sorted_taus {
        for w in sorted_ps.windows(2) {
            let holds = selected(tau, w[1]).is_subset(&selected(tau, w[0]));
            directional.push(Directional {
                claim: format!("selection(tau={tau}, p={}) within selection(tau={tau}, p={})", w[1], w[0]),
                expected: "nested".to_string(),
                observed: if holds { "nested" } else { "violated" }.to_string(),
                holds,
            });
        }
    }
    for &p in &sorted_ps {
        for w in sorted_taus.windows(2) {
            let holds = selected(w[1], p).is_subset(&selected(w[0], p));
            directional.push(Directional {
                claim: format!("selection(tau={}, p={p}) within selection(tau={}, p={p})", w[1], w[0]),
                expected: "nested".to_string(),
                observed: if holds { "nested" } else { "violated" }.to_string(),
                holds,
            });
        }
    }

    // Per-cell channel lists.
    let mut channel_rows = Vec::new();
    for (tau, p, report) in &reports {
        for (layer, channels) in report.per_layer.iter().enumerate() {
            for ch in channels {
                channel_rows.push(vec![
                    tau.to_string(),
                    p.to_string(),
                    layer.to_string(),
                    ch.channel.to_string(),
                    ch.probability.to_string(),
                ]);
            }
        }
    }

    // Per-cell first-position intervention effect, per condition group.
    let mut effect_rows = Vec::new();
    let mut panels = Vec::new();
    for (key, group) in &groups {
        let control = eval_recall_curve(&params, group, None, &HiddenInit::Zero)
            .map_err(CmdError::from)?;
        let mut drops = vec![0.0; resolved.taus.len() * resolved.ps.len()];
        for (ci, (tau, p, report)) in reports.iter().enumerate() {
            let spec =
                InterventionSpec::zero_a(report.targets(resolved.top_layers), timesteps.clone());
            let targeted = eval_recall_curve(&params, group, Some(&spec), &HiddenInit::Zero)
                .map_err(CmdError::from)?;
            for (cond, acc) in [("control", &control), ("targeted", &targeted)] {
                let (lo, hi) = acc.wilson(1);
                effect_rows.push(vec![
                    acc.condition.relation_mode.clone(),
                    tau.to_string(),
                    p.to_string(),
                    cond.to_string(),
                    "1".to_string(),
                    acc.correct[0].to_string(),
                    acc.total[0].to_string(),
                    acc.accuracy(1).to_string(),
                    lo.to_string(),
                    hi.to_string(),
                ]);
            }
            drops[ci] = control.accuracy(1) - targeted.accuracy(1);
        }
        panels.push(HeatPanel {
            title: format!("{key}: first-position drop (rows tau, cols p)"),
            rows: resolved.taus.len(),
            cols: resolved.ps.len(),
            values: drops,
            row_labels: resolved.taus.iter().map(|t| format!("tau={t}")).collect(),
        });
    }

    let run = prepare_run_dir(out_root, "analyze-grid", &resolved, resolved.seed)?;
    let ch_csv = run.file("grid-channels", "csv");
    write_csv(&ch_csv, "tau,p,layer,channel,probability", &channel_rows)?;
    let eff_csv = run.file("grid-effect", "csv");
    write_csv(
        &eff_csv,
        "relation_mode,tau,p,condition,position,correct,total,accuracy,wilson_low,wilson_high",
        &effect_rows,
    )?;
    let dir_csv = run.file("directional", "csv");
    write_directional_csv(&dir_csv, &directional)?;
    print_directional(&directional);
    let svg_path = run.file("grid-effect", "svg");
    std::fs::write(
        &svg_path,
        heatmap_grid(
            &ChartMeta {
                title: "First-position accuracy drop across the threshold grid".to_string(),
                x_label: "p (columns in listed order)".to_string(),
                y_label: "tau".to_string(),
                footer: run.footer(),
            },
            &panels,
        ),
    )?;
    for p in [&ch_csv, &eff_csv, &dir_csv, &svg_path] {
        println!("{}", p.display());
    }

    if directional.iter().any(|d| !d.holds) {
        return Err(CmdError::Numeric(anyhow!(
            "grid nesting invariant violated; see directional CSV"
        )));
    }
    Ok(())
}
