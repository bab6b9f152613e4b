//! `mcp`: batch experiment harness over the cooperative virtual-MIMO
//! library. Subcommands evaluate information/estimation sweeps, reproduce
//! the reference table, run the solvers and the protocol simulator, and
//! execute the numeric property suite.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod check;
pub mod commands;
pub mod config;

/// Process exit codes used by every subcommand.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG_ERROR: i32 = 1;
    pub const NO_CONVERGENCE: i32 = 2;
    pub const PROPERTY_FAILURE: i32 = 3;
}

#[derive(Parser)]
#[command(name = "mcp", about = "Cooperative virtual-MIMO experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mutual-information and MMSE sweep over the configured snr grid (CSV).
    Mi(CommonArgs),
    /// Interference vs interference-free table across array sizes.
    Table2(CommonArgs),
    /// Uplink power allocation solve (JSON + optional iterate trace).
    Power(CommonArgs),
    /// Downlink precoder solve / optimize / compare (JSON + CSV).
    Precode(CommonArgs),
    /// Two-base-station cooperation session (transcript JSON).
    Sim(CommonArgs),
    /// Numeric property suite; nonzero exit on any failure.
    Check(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let (args, runner): (&CommonArgs, fn(&config::ExperimentConfig) -> anyhow::Result<i32>) =
        match &cli.command {
            Command::Mi(a) => (a, commands::cmd_mi),
            Command::Table2(a) => (a, commands::cmd_table2),
            Command::Power(a) => (a, commands::cmd_power),
            Command::Precode(a) => (a, commands::cmd_precode),
            Command::Sim(a) => (a, commands::cmd_sim),
            Command::Check(a) => (a, commands::cmd_check),
        };
    let cfg = match config::ExperimentConfig::load(&args.config, args.seed, args.out.clone()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return exit::CONFIG_ERROR;
        }
    };
    match runner(&cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit::CONFIG_ERROR
        }
    }
}
