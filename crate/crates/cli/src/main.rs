//! `covsel`: experiment driver for randomized sensor selection.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Overrides};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "covsel", version, about = "Randomized sensor selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic plant and sensor pool.
    Gen(RunArgs),
    /// Bound of the optimized distribution across a grid of rho.
    SweepRho(RunArgs),
    /// Optimal sampling distribution with its verification report.
    Optimize(RunArgs),
    /// Optimal and uniform bounds across a grid of n_s.
    SweepNs(RunArgs),
    /// Bounds, Monte Carlo statistics and greedy baseline across n_s.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Omit the timestamp comment from CSV output.
    #[arg(long)]
    reproducible: bool,
}

fn run(cli: Cli) -> CliResult<commands::Report> {
    let (args, command) = match &cli.command {
        Command::Gen(a) => (a, "gen"),
        Command::SweepRho(a) => (a, "sweep-rho"),
        Command::Optimize(a) => (a, "optimize"),
        Command::SweepNs(a) => (a, "sweep-ns"),
        Command::Compare(a) => (a, "compare"),
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        trials: args.trials,
    };
    let config = ExperimentConfig::load(&args.config, &overrides)?;
    let r = args.reproducible;
    match command {
        "gen" => commands::gen(&config),
        "sweep-rho" => commands::sweep_rho(&config, r),
        "optimize" => commands::optimize(&config, r),
        "sweep-ns" => commands::sweep_ns(&config, r),
        _ => commands::compare(&config, r),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for path in &report.written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
