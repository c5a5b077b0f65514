//! `otto`: command-line driver for the Otto engine toolkit.
//!
//! Exit status: 0 on success, 2 on invalid input, 3 on runtime failure or
//! an unmet `[expect]` entry.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::RawConfig;

#[derive(Parser, Debug)]
#[command(name = "otto", version, about = "Single-ion Otto engine: analysis and Monte Carlo simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact finite-time cycle analysis for one parameter set.
    Analyze(Common),
    /// Efficiency at maximum power versus temperature ratio.
    Optimize(Common),
    /// Externally switched engine in the tapered trap.
    Simulate(Common),
    /// Self-driven engine with spatially gated baths.
    Selfdriven(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`key = value` lines, `[beam.<name>]` and `[expect]` sections).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one field, e.g. `--set n_trajectories=100` or `--set beam.cold.saturation=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(c: &Common) -> Result<RawConfig, CliError> {
    let mut raw = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for o in &c.overrides {
        raw.apply_override(o)?;
    }
    if let Some(s) = c.seed {
        raw.apply_override(&format!("seed={s}"))?;
    }
    Ok(raw)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, f): (&Common, fn(&RawConfig, &Path) -> Result<_, CliError>) = match &cli.command {
        Command::Analyze(c) => (c, commands::analyze),
        Command::Optimize(c) => (c, commands::optimize),
        Command::Simulate(c) => (c, commands::simulate),
        Command::Selfdriven(c) => (c, commands::selfdriven),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Validation("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let raw = load(common)?;
    let summary = f(&raw, &common.out)?;
    println!("{}", summary.line());
    for line in commands::check_expectations(&raw, &summary)? {
        log::info!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("otto: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
