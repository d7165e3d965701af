use std::process::ExitCode;

use clap::Parser;
use compdeg_cli::args::Cli;
use compdeg_cli::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("compdeg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
