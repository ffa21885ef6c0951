#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod fail;

use clap::{Parser, Subcommand};
use config::RunConfig;
use fail::CliError;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "trsvi", version, about = "Trust-region stochastic variational inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set schedule.kappa=0.7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a fixed dataset.
    Train(Common),
    /// Simulate an arrival stream and fit a model while it grows.
    Stream(Common),
    /// Score a checkpoint on data.
    Eval(Common),
    /// Re-run a streaming fit from a logged event stream.
    Replay(Common),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("TRSVI_THREADS") else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!("TRSVI_THREADS must be a positive integer, got {raw:?}"))
        })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    // A second interrupt aborts without waiting for the checkpoint.
    let _ = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
    });
    let (common, cmd) = match &cli.command {
        Command::Train(c) => (c, "train"),
        Command::Stream(c) => (c, "stream"),
        Command::Eval(c) => (c, "eval"),
        Command::Replay(c) => (c, "replay"),
    };
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    match cmd {
        "train" => commands::train(&cfg, &stop),
        "stream" => commands::stream(&cfg, &stop),
        "eval" => commands::eval(&cfg),
        _ => commands::replay(&cfg, &stop),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("trsvi: error[{}]: {e}", e.class());
        std::process::exit(e.exit_code());
    }
}
