//! `posi`: post-selection confidence intervals from the command line.

mod commands;
mod common;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::common::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "posi",
    version,
    about = "Confidence intervals for linear predictors that remain valid after model selection"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "POSI_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute one multiplier K for a design and query point.
    Constant(commands::constant::ConstantArgs),
    /// Select a model on data Y and print the resulting interval for x0'beta.
    Interval(commands::interval::IntervalArgs),
    /// Estimate minimal coverage over beta by Monte Carlo.
    Coverage(commands::coverage::CoverageArgs),
    /// Standardized interval lengths along a nested chain of models.
    Lengths(commands::lengths::LengthsArgs),
    /// Draw a random design and query point.
    GenData(commands::gen_data::GenDataArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Constant(a) => commands::constant::run(a),
        Command::Interval(a) => commands::interval::run(a),
        Command::Coverage(a) => commands::coverage::run(a),
        Command::Lengths(a) => commands::lengths::run(a),
        Command::GenData(a) => commands::gen_data::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match config::expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
