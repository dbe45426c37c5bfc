mod cli;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::cli::{Cli, Command};
use crate::error::CliError;
use crate::output::Sink;

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::other(e.to_string()))?;
    }
    let mut sink = Sink::new(&cli.out_dir, cli.format)?;
    let inputs = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut sink),
        Command::Moments(a) => commands::moments(a, &mut sink),
        Command::Solve(a) => commands::solve(a, &mut sink),
        Command::Fit(a) => commands::fit(a, &mut sink),
        Command::Observe(a) => commands::observe(a, &mut sink),
        Command::Feller(a) => commands::feller(a, &mut sink),
        Command::Generate(a) => commands::generate(a, &mut sink),
        Command::Rates(a) => commands::rates(a, &mut sink),
    }?;
    sink.manifest(cli, inputs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", CliError::usage(first).to_json());
            return ExitCode::from(CliError::USAGE);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code)
        }
    }
}
