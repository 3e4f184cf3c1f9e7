//! `inrclass` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 training divergence.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;

/// Invalid combination or value of command-line arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    let diverged = err.chain().any(|e| {
        e.downcast_ref::<inrclass::Error>()
            .is_some_and(inrclass::Error::is_divergence)
    });
    if diverged {
        EXIT_DIVERGENCE
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = exit_code(&e);
            if code == EXIT_USAGE {
                eprintln!("run with --help for usage");
            }
            ExitCode::from(code)
        }
    }
}
