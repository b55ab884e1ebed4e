use std::process::ExitCode;

use clap::Parser;
use tbdq_cli::cli::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TBDQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match tbdq_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
