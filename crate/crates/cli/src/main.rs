//! Batch experiment front end: every analysis and training experiment as a
//! subcommand with deterministic CSV outputs.
//!
//! Exit codes are a stable scripting contract: 0 on success, 1 when a
//! verification run finds a failing check, 2 on usage or configuration
//! errors.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error that maps to exit code 2 (usage/config) while verification
/// failures travel through [`CliOutcome`].
#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<symhead::Error> for CliError {
    fn from(e: symhead::Error) -> Self {
        Self(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self(format!("io error: {e}"))
    }
}

pub enum CliOutcome {
    Success,
    VerificationFailed,
}

#[derive(Parser)]
#[command(
    name = "symhead",
    version,
    about = "Planar symmetric classifier heads: verifiers, sweeps, and desk-scale training studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the zero-sum, criterion-root, and rhombus-projection claims
    /// over a randomized grid.
    #[command(name = "verify-lemmas")]
    VerifyLemmas(VerifyArgs),
    /// Sweep logits and softmax over the analysis plane and measure
    /// extremum divergence.
    Analyze(AnalyzeArgs),
    /// Tabulate the positivity of the half-spaced counterexample value.
    Refute(RefuteArgs),
    /// Train one head on a dataset and log the run.
    Train(TrainCmdArgs),
    /// Repeat training runs over a head grid and tabulate stability.
    Stability(StabilityArgs),
    /// Time training epochs per head kind.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for the manifest and CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Smallest class count (must be >= 3).
    #[arg(long)]
    n_min: Option<usize>,
    /// Largest class count.
    #[arg(long)]
    n_max: Option<usize>,
    /// Feature dimensions to test, comma-separated.
    #[arg(long)]
    dims: Option<String>,
    /// Random trials per (lemma, n, d) cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Weight layout: `symmetric:<n>` or `angles:<deg>,<deg>,...`.
    #[arg(long)]
    weights: Option<String>,
    /// Logit scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Sweep resolution in degrees, in (0, 1].
    #[arg(long)]
    resolution: Option<f64>,
}

#[derive(Args)]
struct RefuteArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Largest class count to tabulate (>= 3).
    #[arg(long)]
    n_max: Option<usize>,
}

/// Flags shared by the training-family commands.
#[derive(Args)]
struct TrainOpts {
    /// Head kind: symmetric | fc | arcface | sphereface.
    #[arg(long)]
    head: Option<String>,
    /// Hypersphere radius (cosine logit scale).
    #[arg(long)]
    sigma: Option<f64>,
    /// Additive margin (arcface, radians) or integer multiplier
    /// (sphereface).
    #[arg(long)]
    margin: Option<f64>,
    /// Dataset: `blobs:<classes>x<d_in>` or
    /// `idx:<timg>,<tlbl>,<eimg>,<elbl>`.
    #[arg(long)]
    dataset: Option<String>,
    /// Samples per class for blob datasets (80/20 split applies).
    #[arg(long)]
    per_class: Option<usize>,
    /// Cluster standard deviation for blob datasets.
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Fractions of the run at which the LR decays by 10x, e.g. 0.5,0.75.
    #[arg(long)]
    lr_decay: Option<String>,
    /// Backbone hidden widths, e.g. 64,64.
    #[arg(long)]
    widths: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainCmdArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    train: TrainOpts,
    /// Head grid, repeatable: `arcface:sigma=4,8,16,32,64:m=0.1`,
    /// `symmetric:sigma=8,16`, `fc`, `sphereface:m=4`.
    #[arg(long)]
    grid: Vec<String>,
    /// Seed repeats per grid cell.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    train: TrainOpts,
    /// Timed epochs per head kind (>= 3).
    #[arg(long)]
    repeats: Option<usize>,
}

fn run(cli: Cli) -> Result<CliOutcome, CliError> {
    match cli.command {
        Command::VerifyLemmas(args) => commands::verify::run(args),
        Command::Analyze(args) => commands::analyze::run(args),
        Command::Refute(args) => commands::refute::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Stability(args) => commands::stability::run(args),
        Command::Bench(args) => commands::bench::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(CliOutcome::Success) => ExitCode::SUCCESS,
        Ok(CliOutcome::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
