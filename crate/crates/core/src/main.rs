use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = evcalib::cli::Cli::parse();
    match evcalib::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
