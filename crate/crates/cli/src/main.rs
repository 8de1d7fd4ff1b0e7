//! `tev`: data generation, training, evaluation and grasp experiments for
//! tactile event networks.

mod commands;
mod context;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::context::{CliError, Context};

#[derive(Parser, Debug)]
#[command(
    name = "tev",
    version,
    about = "Tactile event classification and motion prediction pipeline"
)]
struct Cli {
    /// TOML file whose `[gen]`, `[train]`, ... tables set subcommand
    /// defaults. Command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Worker threads for corpus generation, training and trial batches.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labelled corpus (.tevd).
    Gen(commands::gen::GenArgs),
    /// Train a classifier or the motion predictor.
    Train(commands::train::TrainArgs),
    /// Evaluate checkpoints on a corpus split.
    Eval(commands::eval::EvalArgs),
    /// Roll the predictor out and export truth/prediction strips.
    Rollout(commands::rollout::RolloutArgs),
    /// Time single-sequence inference and the predict-then-classify cascade.
    Bench(commands::bench::BenchArgs),
    /// Run simulated grasp experiments.
    Grasp(commands::grasp::GraspArgs),
    /// Render a sequence as HSV images, optionally as gnuplot vector CSV.
    Viz(commands::viz::VizArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = Context::new(cli.config.as_deref(), cli.jobs).and_then(|ctx| match cli.command {
        Command::Gen(a) => commands::gen::run(a, &ctx),
        Command::Train(a) => commands::train::run(a, &ctx),
        Command::Eval(a) => commands::eval::run(a, &ctx),
        Command::Rollout(a) => commands::rollout::run(a, &ctx),
        Command::Bench(a) => commands::bench::run(a, &ctx),
        Command::Grasp(a) => commands::grasp::run(a, &ctx),
        Command::Viz(a) => commands::viz::run(a, &ctx),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
