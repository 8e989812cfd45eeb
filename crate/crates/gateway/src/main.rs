use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = palpsim_gateway::cli::Cli::parse();
    match palpsim_gateway::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
