//! `dot`: generate synthetic clips, train the refiner, track videos densely,
//! evaluate predictions, run ablations and draw figures.

mod commands;
mod error;
mod fsutil;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dot", version, about = "Dense optical tracking from sparse point tracks")]
struct Cli {
    /// Root seed; every random choice of the run derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON or TOML configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-scene work.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic scenes with ground truth.
    Generate(commands::generate::GenerateArgs),
    /// Train a refiner on generated clips.
    Train(commands::train::TrainArgs),
    /// Dense flow and visibility from one source frame.
    Track(commands::track::TrackArgs),
    /// Score predictions against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Ablation table and track-budget sweep on held-out scenes.
    Ablate(commands::ablate::AblateArgs),
    /// Figures from flows, tracks and reports.
    Plot(commands::plot::PlotArgs),
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub workers: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let global = Global {
        seed: cli.seed,
        config: cli.config,
        workers: cli.workers.max(1),
    };
    match cli.command {
        Command::Generate(a) => commands::generate::run(&global, a),
        Command::Train(a) => commands::train::run(&global, a),
        Command::Track(a) => commands::track::run(&global, a),
        Command::Eval(a) => commands::eval::run(&global, a),
        Command::Ablate(a) => commands::ablate::run(&global, a),
        Command::Plot(a) => commands::plot::run(&global, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
