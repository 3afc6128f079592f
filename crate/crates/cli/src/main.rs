//! `rdrop`: train, sweep, ablate, verify and chart consistency-regularized
//! dropout experiments.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 failed verdict.

mod args;
mod artifacts;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{split_overrides, Cli, Command};
use commands::Failure;

fn main() -> ExitCode {
    let (argv, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => commands::train(a, &overrides),
        Command::Sweep(a) => commands::sweep(a, &overrides),
        Command::Ablate(a) => commands::ablate(a, &overrides),
        Command::Theory(a) => commands::theory(a),
        Command::Ensemble(a) => commands::ensemble(a, &overrides),
        Command::Chart(a) => commands::chart(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Verdict(msg) => eprintln!("{msg}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
