//! `calrank` — calibration-aware sequential recommendation from the shell.
//!
//! The binary chains the library stages into a reproducible pipeline:
//!
//! ```text
//! generate / prepare  ->  train  ->  rerank / evaluate / sweep
//!                                    drift (data audit, no model needed)
//! ```
//!
//! Exit codes: `0` success, `2` usage or configuration errors (bad flags,
//! malformed config, refusing to overwrite), `3` data or runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use calrank_core::rerank::ScheduleMode;
use config::{CalibrationOpts, FileConfig, RerankOpts, SyntheticOpts, TrainingOpts};

// ---------------------------------------------------------------------------
// Error plumbing
// ---------------------------------------------------------------------------

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CmdError {
    pub message: String,
    pub code: u8,
}

pub type CmdResult<T> = Result<T, CmdError>;

pub fn usage(message: impl Into<String>) -> CmdError {
    CmdError { message: message.into(), code: 2 }
}

impl From<calrank_core::Error> for CmdError {
    fn from(err: calrank_core::Error) -> Self {
        let code = match err {
            calrank_core::Error::Config(_) => 2,
            _ => 3,
        };
        CmdError { message: err.to_string(), code }
    }
}

// ---------------------------------------------------------------------------
// Command tree
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "calrank", version, about = "Calibration-aware sequential recommendation pipeline")]
struct Cli {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads for per-user stages (0 = all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic drifting-preference dataset directory
    Generate(GenerateArgs),
    /// Build a dataset directory from interaction and catalog TSV files
    Prepare(PrepareArgs),
    /// Train a scoring model and save a JSON checkpoint
    Train(TrainArgs),
    /// Write calibrated top-K slates for every test user as TSV
    Rerank(RerankArgs),
    /// Report HR, nDCG, and mean miscalibration for one configuration
    Evaluate(EvaluateArgs),
    /// Evaluate a lambda x schedule grid and emit CSV
    Sweep(SweepArgs),
    /// Profile how category preferences drift across time gaps
    Drift(DriftArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    synthetic: SyntheticOpts,
}

#[derive(Args)]
struct PrepareArgs {
    /// Interaction TSV: user_id, item_id, timestamp
    #[arg(long, value_name = "TSV")]
    interactions: Option<PathBuf>,
    /// Catalog TSV: item_id, pipe-separated categories
    #[arg(long, value_name = "TSV")]
    catalog: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (from generate or prepare)
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Checkpoint path to write
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Overwrite an existing checkpoint
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    training: TrainingOpts,
    #[command(flatten)]
    calibration: CalibrationOpts,
}

#[derive(Args)]
struct RerankArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Slate TSV path to write
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    rerank: RerankOpts,
    #[command(flatten)]
    calibration: CalibrationOpts,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// CSV path to write (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    rerank: RerankOpts,
    #[command(flatten)]
    calibration: CalibrationOpts,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// CSV path to write (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
    /// Trade-off strengths to sweep (default 0,0.3,0.5,0.7,0.9)
    #[arg(long, value_delimiter = ',', value_name = "L,L,...")]
    lambdas: Vec<f64>,
    /// Schedules to sweep (default prioritized,uniform)
    #[arg(long, value_delimiter = ',', value_name = "S,S,...")]
    schedules: Vec<ScheduleMode>,
    #[command(flatten)]
    rerank: RerankOpts,
    #[command(flatten)]
    calibration: CalibrationOpts,
}

#[derive(Args)]
struct DriftArgs {
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// CSV path to write (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
    /// Interactions per distribution window (default 20)
    #[arg(long, value_name = "N")]
    window: Option<usize>,
    /// Gaps, in interactions, between compared windows (default 20,40,60,80,100)
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    intervals: Vec<usize>,
    #[command(flatten)]
    calibration: CalibrationOpts,
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not set thread count: {err}");
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) {
    if threads.is_some() {
        eprintln!("warning: --threads ignored (built without the parallel feature)");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let run = || -> CmdResult<()> {
        let file = FileConfig::load(cli.config.as_deref())?;
        match cli.command {
            Command::Generate(args) => commands::generate(&file, args),
            Command::Prepare(args) => commands::prepare(&file, args),
            Command::Train(args) => commands::train_model(&file, args),
            Command::Rerank(args) => commands::rerank_users(&file, args),
            Command::Evaluate(args) => commands::evaluate_model(&file, args),
            Command::Sweep(args) => commands::sweep(&file, args),
            Command::Drift(args) => commands::drift(&file, args),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
