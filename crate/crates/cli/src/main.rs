//! Command-line front end for the tree regressor and its baselines.
//!
//! Subcommands: synth, mask, train, eval, cv, profile. Every command is
//! deterministic given identical flags and inputs; run directories carry the
//! merged configuration for reproduction.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use treelstm_core::{CheckpointError, DataError, TrainError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidRatio(_) | DataError::NegativeNoise(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::EmptyGrid => CliError::Usage(e.to_string()),
            TrainError::Config(c) => CliError::Usage(c.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "treelstm",
    about = "Tree-structured LSTM regression over sequences with missing samples",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a noisy-sine sequence CSV (period 40 slots).
    Synth(SynthArgs),
    /// Delete a fraction of a fully observed CSV's rows, deterministically.
    Mask(MaskArgs),
    /// Train a model on the first 60% of a sequence, test on the rest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Cross-validated grid search over hidden size and learning rate.
    Cv(CvArgs),
    /// Closed-form cost tables and measured multiplication counts.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of grid slots.
    #[arg(long)]
    n: usize,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MaskArgs {
    /// Input CSV (must be fully observed).
    #[arg(long)]
    data: PathBuf,
    /// Fraction of slots to delete; exactly round(ratio·N) rows are blanked.
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by train and cv; unset values fall back to --config, then to
/// built-in defaults.
#[derive(Args, Clone)]
struct ModelFlags {
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Architecture: tree, zi, or fi.
    #[arg(long)]
    arch: Option<String>,
    /// Window length (tree depth).
    #[arg(short = 'L', long = "L")]
    window: Option<usize>,
    /// Hidden size.
    #[arg(long)]
    q: Option<usize>,
    /// Constant SGD learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Missingness ratio injected before splitting (0 keeps the data as-is).
    #[arg(long)]
    ratio: Option<f64>,
    /// Seed for masking, initialization, and everything else in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// BPTT horizon for the main recurrence.
    #[arg(long)]
    bptt: Option<usize>,
    /// Comma-separated leaf patterns ('0'/'1' strings, oldest slot first);
    /// "none" selects the main network only.
    #[arg(long)]
    leaf_set: Option<String>,
    /// Share one combination weight vector across all networks.
    #[arg(long)]
    shared_wtilde: bool,
    /// Update after every defined-target step instead of once per pass.
    #[arg(long)]
    per_step: bool,
    /// Global-norm gradient clip; 0 disables clipping.
    #[arg(long)]
    clip: Option<f64>,
    /// Skip min-max scaling.
    #[arg(long)]
    no_scale: bool,
    /// Record wall-clock times in epochs.csv (breaks byte-reproducibility).
    #[arg(long)]
    timing: bool,
    /// Column index holding explicit targets; absent means next-value
    /// prediction on feature 0.
    #[arg(long)]
    target_col: Option<usize>,
    #[arg(long)]
    init_variance: Option<f64>,
    /// Seed leaves from the main state before the window-edge input.
    #[arg(long)]
    leaf_seed_previous: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Output directory (model.ckpt, epochs.csv, config.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint produced by train.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Re-create the mask used at training time.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    target_col: Option<usize>,
    /// Write per-step predictions.csv (requires --out).
    #[arg(long)]
    dump_predictions: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Comma-separated hidden sizes, e.g. "3,5,8,10".
    #[arg(long)]
    q_grid: Option<String>,
    /// Comma-separated learning rates, e.g. "1e-1,1e-3,1e-5".
    #[arg(long)]
    lr_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Output directory (cv.csv, config.json).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Sweep the missingness ratio and report the closed-form costs.
    #[arg(long)]
    scan: bool,
    /// Run instrumented forward passes and compare against the formulas.
    #[arg(long)]
    measure: bool,
    #[arg(long)]
    arch: Option<String>,
    #[arg(short = 'L', long = "L", default_value_t = 2)]
    window: usize,
    #[arg(long, default_value_t = 10)]
    q: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Sweep step for --scan.
    #[arg(long, default_value_t = 0.05)]
    r_step: f64,
    /// Data for --measure; synthetic when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (profile.csv).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Mask(args) => commands::mask(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Cv(args) => commands::cv(args),
        Command::Profile(args) => commands::profile(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
