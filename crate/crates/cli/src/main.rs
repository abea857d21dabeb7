use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match circadia_cli::run(circadia_cli::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
