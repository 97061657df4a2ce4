mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;
use commands::CliError;
use config::{FileConfig, Settings};

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = match &cli.flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&cli.flags, file)?;
    commands::dispatch(cli.command, &settings)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                let sub = cmd.find_subcommand_mut(cli.command.name()).map(|c| c.render_usage());
                eprintln!("\n{}", sub.unwrap_or_else(|| cmd.render_usage()));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
