//! Experiment harness for preference optimization under temporal drift:
//! synthetic dataset generation, training runs, hyperparameter sweeps,
//! bound-scaling studies and drift-dataset construction.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "nsdpo",
    version,
    about = "Preference optimization under temporal drift: synthetic experiments and analysis"
)]
struct Cli {
    /// Master seed; commands derive their substreams from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file (a bare config or a previously emitted manifest);
    /// flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for sweep/bound-study cells (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic drifting-preference dataset.
    Gen(commands::gen::GenArgs),
    /// Train one objective on a generated dataset.
    Train(commands::train::TrainArgs),
    /// Sweep objectives over discounts, windows and seeds.
    Sweep(commands::sweep::SweepArgs),
    /// Relate empirical estimation error to the bound terms over a grid of
    /// dataset sizes.
    BoundStudy(commands::bound_study::BoundStudyArgs),
    /// Build a drifting preference dataset from a two-source table.
    BuildDataset(commands::build_dataset::BuildDatasetArgs),
    /// Score saved parameters on a test set.
    Eval(commands::eval::EvalArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let out = cli.out.unwrap_or_else(|| PathBuf::from("."));
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Gen(args) => commands::gen::run(args, config, cli.seed, &out),
        Command::Train(args) => commands::train::run(args, config, cli.seed, &out),
        Command::Sweep(args) => commands::sweep::run(args, config, cli.seed, &out, cli.jobs),
        Command::BoundStudy(args) => {
            commands::bound_study::run(args, config, cli.seed, &out, cli.jobs)
        }
        Command::BuildDataset(args) => commands::build_dataset::run(args, config, cli.seed, &out),
        Command::Eval(args) => commands::eval::run(args, config, cli.seed, &out),
    }
}
