//! `trapnoise`: closed-form sweeps, Monte Carlo verification runs and fits.
//!
//! Exit codes: 0 success, 2 configuration, 3 I/O, 4 data parse,
//! 5 non-convergence.

mod commands;
mod config;
mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use failure::Failure;

#[derive(Parser)]
#[command(name = "trapnoise", version, about = "Charge-trap spectral diffusion: sweeps, Monte Carlo and fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides master_seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form linewidth and shift tables.
    Sweep(Common),
    /// Monte Carlo ensemble with the closed-form overlay and agreement report.
    Mc(Common),
    /// Fit a model to a CSV data file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Data CSV.
        #[arg(long)]
        data: PathBuf,
    },
}

fn setup(common: &Common) -> Result<RunConfig, Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::config(vec!["--threads: must be at least 1".into()]));
        }
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Sweep(c) => {
            let cfg = setup(c)?;
            let out = commands::Output::new(&cfg, c.out.as_deref(), "sweep")?;
            commands::cmd_sweep(&cfg, &out)
        }
        Command::Mc(c) => {
            let cfg = setup(c)?;
            let out = commands::Output::new(&cfg, c.out.as_deref(), "mc")?;
            commands::cmd_mc(&cfg, &out)
        }
        Command::Fit { common, data } => {
            let cfg = setup(common)?;
            let out = commands::Output::new(&cfg, common.out.as_deref(), "fit")?;
            let dir = common.config.parent().unwrap_or(Path::new("."));
            commands::cmd_fit(&cfg, data, dir, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
