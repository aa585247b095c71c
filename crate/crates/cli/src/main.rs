//! `tlime`: train the forest, segment images, explain and compare.
//!
//! Exit status: 0 ok, 2 usage, 3 data or ingest, 4 external predictor
//! protocol, 5 internal invariant violation.

mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult, EXIT_INTERNAL};

pub fn run(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    match cli.command {
        Command::TrainRf(a) => commands::train::run(&a, argv),
        Command::Segment(a) => commands::segment::run(&a, argv),
        Command::Explain(a) => commands::explain::run(&a, argv),
        Command::Compare(a) => commands::compare::run(&a, argv),
        Command::Serve(a) => commands::serve::run(&a),
        Command::ExtractIdx(a) => commands::extract::run(&a, argv),
        Command::Replay(a) => commands::replay::run(&a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        // clap exits with 2 on usage errors and 0 for --help/--version
        Err(e) => e.exit(),
    };
    let outcome = std::panic::catch_unwind(|| run(cli, argv));
    let err = match outcome {
        Ok(Ok(())) => return ExitCode::SUCCESS,
        Ok(Err(e)) => e,
        Err(_) => CliError {
            code: EXIT_INTERNAL,
            message: "internal error (panic)".into(),
        },
    };
    eprintln!("tlime: error: {err}");
    err.exit_code()
}
