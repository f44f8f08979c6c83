//! Command-line front end: trace replay, outcome sweeps, exact probabilities
//! and the live websocket service.

pub mod commands;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "duet", version, about = "Entangled duet engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay a trace file in virtual time and record outputs and statistics.
    Replay(ReplayArgs),
    /// Sample the switch circuit over a grid of parameters and write CSV.
    Sweep(SweepArgs),
    /// Print exact outcome probabilities for one parameter.
    Probs(ProbsArgs),
    /// Run the engine on wall-clock ticks behind a websocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output trace path.
    #[arg(long)]
    pub out: PathBuf,
    /// Statistics JSON path.
    #[arg(long)]
    pub stats: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub shots: u64,
    #[arg(long, default_value_t = 13, value_parser = clap::value_parser!(u64).range(2..))]
    pub steps: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// CSV path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbsArgs {
    /// Switch parameter in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    pub s: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}
