//! `tsptw`: generate, label, train, solve, evaluate and sweep.
//!
//! Exit status is 0 on success, 2 for invalid input or configuration and 1
//! for anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Bad flags, config or input files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "tsptw",
    version,
    about = "TSP with time windows: datasets, exact labels, learned construction policies"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as JSONL.
    Gen(commands::GenArgs),
    /// Attach exact or imported expert tours.
    Label(commands::LabelArgs),
    /// Train a construction policy on a labeled dataset.
    Train(commands::TrainArgs),
    /// Write one tour per instance.
    Solve(commands::SolveArgs),
    /// Evaluate solvers and write reports.
    Eval(commands::EvalArgs),
    /// Weighted-score curves from evaluation summaries.
    Sweep(commands::SweepArgs),
    /// Check whether greedy rules already solve a corpus.
    Probe(commands::ProbeArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()?;
    }
    match cli.command {
        Command::Gen(a) => commands::gen(&mut cfg, a),
        Command::Label(a) => commands::label(&mut cfg, a),
        Command::Train(a) => commands::train(&mut cfg, a),
        Command::Solve(a) => commands::solve(&mut cfg, a),
        Command::Eval(a) => commands::eval(&mut cfg, a),
        Command::Sweep(a) => commands::sweep(&mut cfg, a),
        Command::Probe(a) => commands::probe(&mut cfg, a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<tsptw::Error>() {
            return match e {
                tsptw::Error::Io(_) | tsptw::Error::NonFiniteLoss { .. } => 1,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
