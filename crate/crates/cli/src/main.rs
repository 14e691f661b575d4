//! The `ladderfolio` binary: parse, run, map errors to exit codes.

use std::process::ExitCode;

use ladderfolio_cli::{parse_args, run, CliError};

fn main() -> ExitCode {
    match parse_args(std::env::args()).and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Info(text)) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
