use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qclock::config::{ConfigError, ScenarioConfig, ScenarioKind};
use qclock::scenario::run_scenario;

/// Entangled-clock synchronisation simulator.
#[derive(Parser)]
#[command(name = "qclock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario config file.
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Single-atom Ramsey fringe against the closed form.
    Ramsey(RunArgs),
    /// Generate and store a heralded pair ensemble.
    Distribute(RunArgs),
    /// Start both clocks, exchange labels and read out both parties.
    Sync(RunArgs),
    /// Two-ensemble frequency comparison.
    Compare(RunArgs),
    /// GHZ parity fringes.
    Ghz(RunArgs),
    /// Check a config and print its normalized form.
    Validate {
        config: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ConfigError::Read { .. } => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Validate { config } => {
            return match ScenarioConfig::load(config) {
                Ok(cfg) => {
                    print!("{}", cfg.normalized());
                    ExitCode::SUCCESS
                }
                Err(e) => config_failure(&e),
            };
        }
        Command::Ramsey(a) => (ScenarioKind::Ramsey, a),
        Command::Distribute(a) => (ScenarioKind::Distribute, a),
        Command::Sync(a) => (ScenarioKind::Sync, a),
        Command::Compare(a) => (ScenarioKind::Compare, a),
        Command::Ghz(a) => (ScenarioKind::Ghz, a),
    };
    let cfg = match load(args) {
        Ok(cfg) => cfg,
        Err(e) => return config_failure(&e),
    };
    match run_scenario(kind, &cfg) {
        Ok(out) => {
            for f in out.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
