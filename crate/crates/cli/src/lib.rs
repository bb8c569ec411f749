//! Command-line front end for the greenwave planner: scenario loading, run
//! orchestration and result files.

pub mod commands;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "greenwave",
    version,
    about = "Speed planning through signalized intersections"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search green windows and optimize the speed trajectory.
    Optimize(RunArgs),
    /// Simulate the rule-based human driver.
    Baseline(RunArgs),
    /// Solve the gridded dynamic program.
    Dp(RunArgs),
    /// Run optimizer, driver and dynamic program on the same scenario.
    Compare(RunArgs),
    /// Re-optimize for each time weight in a list.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
#[group(id = "input", required = true, multiple = false)]
pub struct InputArgs {
    /// Scenario JSON file.
    #[arg(long, group = "input")]
    pub scenario: Option<PathBuf>,
    /// Use a randomly generated scenario with this seed instead of a file.
    #[arg(long, group = "input")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Treat every intersection as straight-through.
    #[arg(long)]
    pub no_turn: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Time weights, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub wt: Vec<f64>,
    /// Sweep entries solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Run one parsed invocation; returns the lines printed on success.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Optimize(a) => commands::optimize(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Dp(a) => commands::dp(a),
        Command::Compare(a) => commands::compare(a),
        Command::Sweep(a) => commands::sweep(a),
    }
}
