//! `simplex-flow`: run, sweep and verify decoding dynamics on the simplex.
//!
//! Exit codes: 0 success, 1 other failure (including failed sweep cells),
//! 2 configuration error, 3 numerical divergence, 4 oracle failure or claim mismatch.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{SweepMode, VerifyOptions};
use crate::config::{parse_numbers, resolve, CommonArgs, Grid};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Oracle(_) => commands::EXIT_ORACLE,
            CliError::Other(_) => 1,
        }
    }
}

impl From<simplex_flow::Error> for CliError {
    fn from(e: simplex_flow::Error) -> Self {
        match e {
            simplex_flow::Error::OracleFailure(msg) => CliError::Oracle(msg),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "simplex-flow", version, about = "Decoding dynamics on the probability simplex")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a replicator flow and write its trajectory.
    Simulate(CommonArgs),
    /// Repeat a mirror step and write the per-step table.
    ProxIterate(CommonArgs),
    /// Run a parameter grid, one simulation or iteration per cell.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated temperatures.
        #[arg(long)]
        temperatures: Option<String>,
        /// Comma-separated coupling strengths for a path-dependent field.
        #[arg(long)]
        betas: Option<String>,
        /// Comma-separated step sizes.
        #[arg(long)]
        etas: Option<String>,
        #[arg(long, value_enum, default_value = "simulate")]
        mode: SweepMode,
    },
    /// Run the oracle self-tests and reproduce the committed claim matrix.
    Verify {
        /// Comma-separated claim ids to adjudicate.
        #[arg(long)]
        claims: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Compare against this matrix instead of the committed one.
        #[arg(long)]
        expected: Option<PathBuf>,
        /// Write the freshly derived matrix here.
        #[arg(long)]
        write_expected: Option<PathBuf>,
        /// Write the full report (JSON) here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn axis(flag: &str, text: &Option<String>) -> Result<Vec<f64>, CliError> {
    match text {
        None => Ok(Vec::new()),
        Some(t) => parse_numbers(t).map_err(|e| CliError::Config(format!("--{flag}: {e}"))),
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&resolve(&args, None)?),
        Command::ProxIterate(args) => commands::prox_iterate(&resolve(&args, None)?),
        Command::Sweep {
            common,
            temperatures,
            betas,
            etas,
            mode,
        } => {
            let grid = Grid {
                temperatures: axis("temperatures", &temperatures)?,
                betas: axis("betas", &betas)?,
                etas: axis("etas", &etas)?,
            };
            commands::sweep(&resolve(&common, Some(&grid))?, mode)
        }
        Command::Verify {
            claims,
            trials,
            seed,
            expected,
            write_expected,
            output,
        } => commands::verify(&VerifyOptions {
            claims: claims.map(|c| c.split(',').map(|s| s.trim().to_string()).collect()),
            trials,
            seed,
            expected,
            write_expected,
            output,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
