use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = harmony::cli::Cli::parse();
    match harmony::cli::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harmony: {e}");
            ExitCode::from(harmony::cli::exit_code(&e))
        }
    }
}
