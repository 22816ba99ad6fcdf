use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = geoadapt_cli::Cli::parse();
    match geoadapt_cli::run(&cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
