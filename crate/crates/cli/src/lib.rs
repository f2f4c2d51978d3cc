//! Command-line front end for the `ssvd` library: file formats, config
//! resolution and the `predict`, `simulate`, `estimate` and `generate`
//! commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod output;
pub mod spec;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{estimate::EstimateArgs, generate::GenerateArgs, predict::PredictArgs, simulate::SimulateArgs};
use config::resolve;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ssvd", version, about = "Shared right singular subspace estimation across noisy tables")]
pub struct Cli {
    /// TOML (or JSON) settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Predict(PredictArgs),
    Simulate(SimulateArgs),
    Estimate(EstimateArgs),
    Generate(GenerateArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Predict(a) => commands::predict::run(&resolve(&a, file, "predict")?),
        Command::Simulate(a) => commands::simulate::run(resolve(&a, file, "simulate")?),
        Command::Estimate(a) => commands::estimate::run(resolve(&a, file, "estimate")?),
        Command::Generate(a) => commands::generate::run(resolve(&a, file, "generate")?),
    }
}

/// Caps the global thread pool when `SSVD_THREADS` is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SSVD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("SSVD_THREADS={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(e.to_string()))
}
