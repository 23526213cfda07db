//! `mixemu`: one binary for the whole pipeline.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 solver divergence
//! (partial output is kept).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mixemu", version, about = "Reactive-mixing simulations and their machine-learning emulators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory; also where later stages look for earlier outputs.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Seed for every random choice (split, folds, fits). Defaults to the
    /// config's top-level `seed`, else 0.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads for campaign solves and averaging-ensemble fits.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub jobs: usize,

    /// Emulator family (lsqr, ridge, ..., mlp).
    #[arg(long, global = true, value_name = "NAME")]
    pub emulator: Option<String>,

    /// Target series (cbar_A … var_C) or class_C; default: every target the family supports.
    #[arg(long, global = true, value_name = "NAME")]
    pub target: Option<String>,

    /// Config override `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the [simulation] config; writes the trajectory and its QoI series.
    Simulate,
    /// Solve every [grid] config not already on disk; writes campaign.csv.
    Campaign,
    /// Fit an emulator on the training simulations; writes models and a report.
    Train,
    /// Score saved models on the held-out simulations; writes a report and prediction series.
    Evaluate,
    /// Cross-validated search over the [gridsearch.<family>] grid.
    Gridsearch,
    /// Time one solve against emulator prediction of the same series.
    Benchmark,
}

fn init_logging() {
    let level = std::env::var("MIXEMU_LOG").unwrap_or_else(|_| "warn".into());
    let level = match level.as_str() {
        "error" | "warn" | "info" | "debug" => level,
        other => {
            eprintln!("warning: MIXEMU_LOG={other} is not one of error, warn, info, debug; using warn");
            "warn".into()
        }
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
