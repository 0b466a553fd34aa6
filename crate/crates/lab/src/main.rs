use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssmlab::commands::{analyze, gen, gradcheck, selftest, train};

/// Selective state-space memory laboratory: dataset generation, training,
/// and the full analysis battery as reproducible, config-driven runs.
#[derive(Parser)]
#[command(name = "ssmlab", version, about)]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "SSMLAB_OUT", default_value = "runs")]
    out_root: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate recall datasets and vocabularies.
    Gen(gen::GenArgs),
    /// Train the toy model on a recall dataset.
    Train(train::TrainArgs),
    /// Run one of the analyses against a checkpoint.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Run quick internal consistency checks.
    Selftest,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Positional recall-accuracy curve.
    Curve(analyze::CurveArgs),
    /// Identify long-term-memory channels.
    Ltm(analyze::LtmArgs),
    /// Causal gate ablation with a matched random baseline.
    Intervene(analyze::InterveneArgs),
    /// Distractor sweep over the same triples.
    Distract(analyze::DistractArgs),
    /// Delta statistics on periodic probe inputs.
    Delta(analyze::DeltaArgs),
    /// Kernel-magnitude profile on periodic probe inputs.
    Kernel(analyze::DeltaArgs),
    /// Per-layer uniform hidden-state initialization sweep.
    InitSweep(analyze::InitSweepArgs),
    /// Identification threshold grid with per-cell interventions.
    Grid(analyze::GridArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Gen(args) => gen::run(&cli.out_root, args),
        Cmd::Train(args) => train::run(&cli.out_root, args),
        Cmd::Analyze { what } => match what {
            AnalyzeCmd::Curve(args) => analyze::run_curve(&cli.out_root, args),
            AnalyzeCmd::Ltm(args) => analyze::run_ltm(&cli.out_root, args),
            AnalyzeCmd::Intervene(args) => analyze::run_intervene(&cli.out_root, args),
            AnalyzeCmd::Distract(args) => analyze::run_distract(&cli.out_root, args),
            AnalyzeCmd::Delta(args) => analyze::run_delta(&cli.out_root, args),
            AnalyzeCmd::Kernel(args) => analyze::run_kernel(&cli.out_root, args),
            AnalyzeCmd::InitSweep(args) => analyze::run_init_sweep(&cli.out_root, args),
            AnalyzeCmd::Grid(args) => analyze::run_grid(&cli.out_root, args),
        },
        Cmd::Gradcheck(args) => gradcheck::run(args),
        Cmd::Selftest => selftest::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
