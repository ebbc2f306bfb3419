//! driftforge: reproducible synthesis, training, diagnostics and
//! backtesting runs driven by a single config file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.

mod commands;
mod config;
mod prepare;

use clap::{Parser, Subcommand};
use config::RunConfig;
use driftforge_core::CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "driftforge", version, about = "Drift-aware financial time-series synthesis")]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default configuration.
    Config {
        /// Emit the full default TOML.
        #[arg(long)]
        defaults: bool,
    },
    /// Load and align input CSVs into a cached panel plus schema report.
    Ingest,
    /// Rolling train/validation vs test proximity metrics.
    DriftReport,
    /// One-shot manipulation with a fixed policy, with provenance.
    Augment,
    /// Joint planner + task-model training loop.
    Train,
    /// Regenerate augmented batches from a provenance log, bit-exactly.
    Replay {
        /// Provenance log path (defaults to <out_dir>/provenance.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Return autocorrelations and leverage profile per stock.
    StylizedFacts,
    /// Real-vs-synthetic classifier score against an augmented CSV.
    Discriminate {
        /// Augmented windows produced by `augment` or `replay`.
        #[arg(long)]
        synthetic: PathBuf,
    },
    /// Baseline trading policies through the environment on the test slice.
    Backtest,
}

fn load_config(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| config::ConfigError {
        field: "config".into(),
        message: "missing --config <file>".into(),
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), MainError> {
    match &cli.command {
        Command::Config { defaults } => {
            if *defaults {
                commands::cmd_config_defaults().map_err(MainError::Runtime)
            } else {
                let cfg = load_config(&cli).map_err(MainError::Config)?;
                print!("{}", cfg.to_toml());
                Ok(())
            }
        }
        command => {
            let cfg = load_config(&cli).map_err(MainError::Config)?;
            let run = || -> driftforge_core::Result<()> {
                match command {
                    Command::Config { .. } => unreachable!("handled above"),
                    Command::Ingest => commands::cmd_ingest(&cfg),
                    Command::DriftReport => commands::cmd_drift_report(&cfg),
                    Command::Augment => commands::cmd_augment(&cfg),
                    Command::Train => commands::cmd_train(&cfg),
                    Command::Replay { log } => commands::cmd_replay(&cfg, log.clone()),
                    Command::StylizedFacts => commands::cmd_stylized_facts(&cfg),
                    Command::Discriminate { synthetic } => {
                        commands::cmd_discriminate(&cfg, synthetic.clone())
                    }
                    Command::Backtest => commands::cmd_backtest(&cfg),
                }
            };
            run().map_err(|e| match e {
                CoreError::Config(_) => MainError::ConfigCore(e),
                other => MainError::Runtime(other),
            })
        }
    }
}

enum MainError {
    Config(config::ConfigError),
    ConfigCore(CoreError),
    Runtime(CoreError),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(MainError::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(MainError::ConfigCore(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(MainError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
