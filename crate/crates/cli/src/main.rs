//! Command line front end.
//!
//! Four subcommands cover the workflow: `train` fits a protocol network to a
//! problem, `eval` tabulates everything the trained network encodes, `oracle`
//! compares it against the exact gauge potential and the nested-commutator
//! baseline, and `fidelity` integrates the Schrodinger equation under the
//! learned drive.
//!
//! Exit codes: 2 for configuration and format problems, 3 for numerical
//! failures (with the last checkpoint path on stderr where one exists), 1
//! for plain I/O trouble.

mod commands;
mod manifest;
mod problems;
mod table;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<cdpinn_core::problem::ProblemError> for CliError {
    fn from(e: cdpinn_core::problem::ProblemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cdpinn_core::net::NetError> for CliError {
    fn from(e: cdpinn_core::net::NetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<cdpinn_core::train::TrainError> for CliError {
    fn from(e: cdpinn_core::train::TrainError) -> Self {
        match e {
            cdpinn_core::train::TrainError::Numerics { .. } => CliError::Numerics(e.to_string()),
            cdpinn_core::train::TrainError::Io(io) => CliError::Io(io),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<cdpinn_core::oracle::OracleError> for CliError {
    fn from(e: cdpinn_core::oracle::OracleError) -> Self {
        use cdpinn_core::oracle::OracleError;
        match e {
            OracleError::StepSize(_) | OracleError::Linalg(_) => CliError::Numerics(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cdpinn",
    version,
    about = "Counterdiabatic driving protocols from physics-informed training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a protocol network on a problem Hamiltonian pair.
    Train(TrainArgs),
    /// Tabulate schedule, coefficients, operators, and energy tracks of a
    /// trained network.
    Eval(EvalArgs),
    /// Compare drives against the exact gauge potential on a lambda grid.
    Oracle(OracleArgs),
    /// Integrate the Schrodinger equation under the learned and the bare
    /// protocol.
    Fidelity(FidelityArgs),
}

/// Problem selector shared by all subcommands: a built-in tag like
/// `h2:1.0` or a path to a problem JSON file.
#[derive(Args)]
struct ProblemArg {
    /// Built-in tag (h2:1.0, h2:1.5, h2:2.0, h2:2.5) or problem file path.
    #[arg(long)]
    problem: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    problem: ProblemArg,
    /// Preset run length: `desk` converges in minutes on one core, `paper`
    /// is the full 500k-epoch schedule.
    #[arg(long, value_enum)]
    profile: commands::train::Profile,
    /// Override the profile's epoch count.
    #[arg(long)]
    epochs: Option<u64>,
    /// Override the profile's learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Seed for the network initialization.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "cdpinn_out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file from a training run.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    problem: ProblemArg,
    /// Number of uniform time grid points.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    #[arg(long, default_value = "cdpinn_out")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArg,
    /// Number of uniform lambda grid points on [0, 1].
    #[arg(long, default_value_t = 101)]
    lambda_grid: usize,
    /// Nested-commutator expansion order for the baseline column.
    #[arg(long, default_value_t = 2)]
    nc_order: usize,
    /// Optional checkpoint; adds model columns to the report.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "cdpinn_out")]
    out: PathBuf,
}

#[derive(Args)]
struct FidelityArgs {
    /// Checkpoint file from a training run.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    problem: ProblemArg,
    /// Integrator step bound; must stay below 1e-3 of the protocol span.
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
    /// Number of uniform report nodes over the protocol.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value = "cdpinn_out")]
    out: PathBuf,
}

/// Caps the global thread pool when CDPINN_THREADS is set.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CDPINN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        CliError::Config(format!(
            "CDPINN_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure the thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    init_threads()?;
    match Cli::parse().command {
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Oracle(args) => commands::oracle::run(args),
        Command::Fidelity(args) => commands::fidelity::run(args),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
