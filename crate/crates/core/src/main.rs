use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use slab_mlmc::harness::{run_study, StudyConfig, StudyKind};

/// Slab-geometry radiative transport with random cross-sections:
/// deterministic solves, convergence studies, and MC / MLMC epsilon-cost
/// experiments.
#[derive(Parser)]
#[command(name = "slab-mlmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a flat `key = value` config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the worker count (0 = all logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one realisation and write the flux profile.
    Solve(CommonArgs),
    /// Mean-error convergence study against a reference solution.
    Convergence(CommonArgs),
    /// Epsilon-cost comparison of MC and MLMC.
    Epscost(CommonArgs),
    /// Karhunen-Loeve eigenpair cross-checks.
    KlCheck(CommonArgs),
}

impl Command {
    fn split(&self) -> (StudyKind, &CommonArgs) {
        match self {
            Command::Solve(a) => (StudyKind::Solve, a),
            Command::Convergence(a) => (StudyKind::Convergence, a),
            Command::Epscost(a) => (StudyKind::EpsCost, a),
            Command::KlCheck(a) => (StudyKind::KlCheck, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();

    let mut cfg = match StudyConfig::from_file(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("slab-mlmc: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }

    match run_study(kind, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slab-mlmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
