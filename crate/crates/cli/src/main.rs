//! Reproducible command-line workflow: compute reachable sets, train the
//! value and policy networks, simulate closed loops, and compare the three
//! controllers.
//!
//! Exit codes: 0 ok, 1 configuration/artifact error, 2 infeasibility,
//! 3 acceptance-threshold failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use neurodp_cli::commands::{self, AppError, ControllerKind, Ctx};
use neurodp_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "neurodp",
    about = "Neural-network approximate dynamic programming for constrained optimal control",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config JSON; defaults to the built-in benchmark
    /// (identical to configs/benchmark.json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also emit SVG plots where applicable.
    #[arg(long, global = true)]
    svg: bool,

    /// Worker threads for dataset generation (default: hardware parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the config's training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Dump per-iteration solver traces (iteration, objective, gap) as CSV
    /// where a command runs a conditional-gradient solve.
    #[arg(long, global = true)]
    trace: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the backward reachable sets X_0..X_N and write them as JSON.
    Sets,
    /// Train the cost-to-go networks by sequential dynamic programming.
    TrainValue,
    /// Train the softmax vertex-coefficient policy network.
    TrainPolicy,
    /// Simulate one closed loop from a given initial state.
    Simulate {
        #[arg(long, value_enum)]
        controller: ControllerKind,
        /// Initial state as comma-separated values, e.g. "6.75,9".
        #[arg(long)]
        x0: String,
    },
    /// Run all three controllers on every configured initial state.
    Compare,
}

fn parse_x0(text: &str) -> Result<DVector<f64>, AppError> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => Err(AppError::Config(format!("cannot parse --x0 '{text}' as comma-separated reals"))),
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| AppError::Config(format!("cannot configure {jobs} worker threads: {e}")))?;
    }

    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| AppError::Config(e.to_string()))?,
        None => ExperimentConfig::benchmark(),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let seed = cli.seed.unwrap_or(cfg.training.seed);
    let ctx = Ctx { cfg, out, svg: cli.svg, seed, trace: cli.trace };

    match cli.command {
        Command::Sets => commands::cmd_sets(&ctx),
        Command::TrainValue => commands::cmd_train_value(&ctx),
        Command::TrainPolicy => commands::cmd_train_policy(&ctx),
        Command::Simulate { controller, x0 } => {
            let x0 = parse_x0(&x0)?;
            commands::cmd_simulate(&ctx, controller, &x0)
        }
        Command::Compare => commands::cmd_compare(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
