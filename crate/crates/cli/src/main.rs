use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod config;
mod run;

use config::{Command, Overrides};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

/// Spectral solver and Monte Carlo harness for the nonlinear Schrödinger
/// equation with white noise dispersion.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long, value_enum)]
    command: Option<Command>,

    #[arg(long)]
    seed: Option<u64>,

    /// Threads used for Monte Carlo samples
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set grid=256`
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        command: cli.command,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
        set: cli.set,
    };
    let cfg = match config::load(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run::run(&cfg) {
        Ok(summary) if summary.passed => {
            println!("{}: ok, results in {}", cfg.command, cfg.out.display());
            ExitCode::SUCCESS
        }
        Ok(summary) => {
            for c in summary.failed() {
                eprintln!("invariant violated: {} = {:e} (required {})", c.name, c.value, c.bound);
            }
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
