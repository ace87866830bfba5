//! `tailforge`: conjugates, tail bounds, calibration, Monte Carlo verification
//! and U-statistics from JSON run configurations.
//!
//! Exit codes: 0 success, 2 validation or malformed input, 3 domain error,
//! 4 calibration unsatisfiable, 5 dominance violation, 6 resource cap.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tailforge_core::Error;

#[derive(Parser, Debug)]
#[command(name = "tailforge", version, about = "Exponential tail bounds for sums and U-statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the Legendre-Fenchel conjugate of a generator.
    Conjugate(Common),
    /// Evaluate the tail bound over a t-grid.
    Bound(Common),
    /// Smallest t at which the bound reaches each level alpha.
    Invert(Common),
    /// Calibrate the constant C against a law's log-MGF.
    Calibrate(Common),
    /// Monte Carlo check that the empirical tail sits below the bound.
    Verify(Common),
    /// Evaluate a U-statistic on a data set.
    Ustat(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config entry, `key=value` (value parsed as JSON); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed for Monte Carlo runs; beats TAILFORGE_SEED and the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Write results here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(short, long, value_enum)]
    format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed or incomplete configuration.
    Config(String),
    Core(Error),
    /// The bound was exceeded at one or more nodes.
    Violation(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Violation(_) => 5,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::Validation(_) | Error::Json(_) | Error::Io(_) => 2,
                Error::Domain(_) | Error::DomainTooShort { .. } => 3,
                Error::CalibrationUnsatisfiable { .. } => 4,
                Error::CapExceeded(_) => 6,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Violation(msg) => write!(f, "dominance violated: {msg}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Conjugate(c) => commands::conjugate(c),
        Command::Bound(c) => commands::bound(c),
        Command::Invert(c) => commands::invert(c),
        Command::Calibrate(c) => commands::calibrate(c),
        Command::Verify(c) => commands::verify(c),
        Command::Ustat(c) => commands::ustat(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tailforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
