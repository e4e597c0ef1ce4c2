//! Command-line front end: one subcommand per analysis, JSON or CSV output
//! with an embedded config echo.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
//! 4 verification breach.

mod commands;
mod config;
mod output;
mod verify;

use std::process::ExitCode;

use clap::Parser;
use config::{Command, Format, RunConfig};
use output::Report;
use rwdrift::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::NoConvergence { .. }
                | Error::FormulaMismatch { .. }
                | Error::OutOfDomain(_)
                | Error::MemoryBudgetExceeded { .. }
                | Error::MultiStartDisagreement { .. } => 3,
                _ => 2,
            },
        }
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::FreeExact => commands::free_exact(cfg),
        Command::Simulate => commands::simulate(cfg),
        Command::Convolve => commands::convolve(cfg),
        Command::FreeProduct => commands::free_product(cfg),
        Command::Optimize => commands::optimize(cfg),
        Command::Sweep => commands::sweep(cfg),
        Command::Concavity => commands::concavity(cfg),
        Command::Verify => verify::verify(cfg),
    }
}

fn run(cfg: RunConfig) -> Result<Vec<String>, CliError> {
    let cfg = cfg.resolve()?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let report = dispatch(&cfg)?;
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    let text = match (cfg.format, &report.table) {
        (Some(Format::Csv), Some(table)) => output::to_csv_string(table, &echo),
        _ => output::to_json_string(&output::document(&echo, report.result)),
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(report.breaches)
}

fn main() -> ExitCode {
    match run(RunConfig::parse()) {
        Ok(breaches) if breaches.is_empty() => ExitCode::SUCCESS,
        Ok(breaches) => {
            for b in breaches {
                eprintln!("verification breach: {b}");
            }
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
