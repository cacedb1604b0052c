//! `optimev`: run the bot detection and measurement stages from a config file.
//!
//! Exit status is 0 on success, 2 when an input file or the config is
//! missing, and 1 when a stage fails.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use optimev_core::config::{Config, ConfigError};
use optimev_core::fixture;
use optimev_core::pipeline::{self, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "optimev", version, about = "Detect cyclic-arbitrage bots and measure their on-chain footprint")]
struct Cli {
    /// Path to the TOML config.
    #[arg(short, long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Worker threads; 0 uses the config value, or one per core.
    #[arg(short, long, global = true, default_value_t = 0)]
    workers: usize,
    /// Log verbosity: -v for info, -vv for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find contracts whose trades close profitable cycles.
    Detect,
    /// Screen candidates and write the bot set.
    Validate,
    /// Label every transaction by purpose, DEX involvement and outcome.
    Classify,
    /// Write daily gas, fee, price and revert reports.
    Metrics,
    /// Compare bot bytecode and group identical deployments.
    Similarity,
    /// Fit the daily regression of bot activity on market conditions.
    Regress,
    /// Run every stage in order.
    Pipeline,
    /// Write the synthetic fixture and its config to a directory.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = fixture::DEFAULT_SEED)]
        seed: u64,
    },
}

enum Failure {
    Missing(anyhow::Error),
    Stage(anyhow::Error),
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stage = match cli.command {
        Command::Fixture { out, seed } => {
            return fixture::generate(seed)
                .write(&out)
                .with_context(|| format!("writing fixture to {}", out.display()))
                .map_err(Failure::Stage);
        }
        Command::Detect => Some(Stage::Detect),
        Command::Validate => Some(Stage::Validate),
        Command::Classify => Some(Stage::Classify),
        Command::Metrics => Some(Stage::Metrics),
        Command::Similarity => Some(Stage::Similarity),
        Command::Regress => Some(Stage::Regress),
        Command::Pipeline => None,
    };

    let cfg = Config::load(&cli.config).map_err(|e| match e {
        ConfigError::Read { .. } => Failure::Missing(e.into()),
        other => Failure::Stage(other.into()),
    })?;

    let workers = if cli.workers > 0 { cli.workers } else { cfg.workers };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("starting worker pool")
        .map_err(Failure::Stage)?;

    let result = match stage {
        Some(s) => pipeline::run_stage(&cfg, s),
        None => pipeline::run_pipeline(&cfg),
    };
    result.map_err(|e: PipelineError| {
        if e.is_missing_input() {
            Failure::Missing(e.into())
        } else {
            Failure::Stage(e.into())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Missing(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
