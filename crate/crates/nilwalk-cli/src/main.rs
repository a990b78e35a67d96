use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = nilwalk_cli::Cli::parse();
    ExitCode::from(nilwalk_cli::run(cli))
}
