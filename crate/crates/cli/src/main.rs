//! `hbce`: one binary covering the whole pipeline. Every subcommand writes
//! its outputs plus a `manifest.txt` into the chosen output directory, and
//! identical flags produce byte-identical primary outputs (only the
//! manifest's duration field varies between runs).
//!
//! Exit codes are a stable contract: 0 success, 2 for usage or
//! configuration errors (bad flags, inconsistent files), 1 for runtime
//! failures (I/O, corrupt data, divergence).

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

mod commands;
mod common;
mod manifest;

use commands::{cam, estimate, eval, gen_data, predict, sweep, train};

#[derive(Debug)]
pub enum CliError {
    /// The flags or the files they name cannot describe a valid run; exit 2.
    Config(String),
    /// A valid configuration failed while executing; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hbce",
    version,
    about = "Hierarchical multi-label classification pipeline",
    subcommand_required = true,
    arg_required_else_help = true
)]
enum Cli {
    GenData(gen_data::Args),
    EstimatePenalties(estimate::Args),
    Train(train::Args),
    Eval(eval::Args),
    Predict(predict::Args),
    Cam(cam::Args),
    Sweep(sweep::Args),
}

fn main() -> ExitCode {
    // clap itself exits with code 2 on unparsable flags
    let cli = Cli::parse();
    let result = match cli {
        Cli::GenData(args) => gen_data::run(args),
        Cli::EstimatePenalties(args) => estimate::run(args),
        Cli::Train(args) => train::run(args),
        Cli::Eval(args) => eval::run(args),
        Cli::Predict(args) => predict::run(args),
        Cli::Cam(args) => cam::run(args),
        Cli::Sweep(args) => sweep::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
