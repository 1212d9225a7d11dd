//! `srtune`: configuration-driven runs of the g² model, photon simulation,
//! fitting and strain tuning.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Output;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "srtune", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the g² model (and its IRF-convolved form) on a grid.
    Model(RunArgs),
    /// Monte Carlo oracle and synthetic coincidence histogram.
    Simulate(RunArgs),
    /// Joint fit of measured or synthetic g² curves.
    Fit(RunArgs),
    /// Closed-loop strain tuning of a simulated waveguide.
    Tune(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

type Exec = fn(&RunConfig, &Output) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, args, exec): (&str, RunArgs, Exec) = match cli.command {
        Command::Model(a) => ("model", a, commands::model),
        Command::Simulate(a) => ("simulate", a, commands::simulate),
        Command::Fit(a) => ("fit", a, commands::fit),
        Command::Tune(a) => ("tune", a, commands::tune),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.check_experiment(name)?;
    cfg.experiment = Some(name.to_string());
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = Output::create(&args.out)?;
    out.write("config.toml", &cfg.to_toml())?;
    exec(&cfg, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
