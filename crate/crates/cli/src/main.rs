mod args;
mod commands;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, Overlay, RunConfig};
use error::CliResult;
use output::OutputDir;

fn run(cli: Cli) -> CliResult<String> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed);
    let format = cli.format.or(config.format).unwrap_or_default();
    let dir = cli
        .out
        .clone()
        .or(config.out.clone())
        .unwrap_or_else(|| PathBuf::from("dustmns-out"));
    let mut out = OutputDir::create(&dir, format)?;
    let name = cli.command.name();
    let used_seed = seed.unwrap_or(0);

    let (outcome, manifest_seed) = match cli.command {
        Command::Validate(a) => (
            commands::validate(a.overlay(config.validate.unwrap_or_default()), &mut out)?,
            None,
        ),
        Command::Tables(a) => (
            commands::tables(a.overlay(config.tables.unwrap_or_default()), &mut out)?,
            None,
        ),
        Command::Estimate(a) => (
            commands::estimate(
                a.overlay(config.estimate.unwrap_or_default()),
                used_seed,
                &mut out,
            )?,
            Some(used_seed),
        ),
        Command::Simulate(a) => (
            commands::simulate(
                a.overlay(config.simulate.unwrap_or_default()),
                used_seed,
                &mut out,
            )?,
            Some(used_seed),
        ),
        Command::Advise(a) => (
            commands::advise(a.overlay(config.advise.unwrap_or_default()), &mut out)?,
            None,
        ),
        Command::Thetastar(a) => (
            commands::thetastar(a.overlay(config.thetastar.unwrap_or_default()), &mut out)?,
            None,
        ),
    };
    out.finish(name, manifest_seed, outcome.config, outcome.extra)?;
    match outcome.deferred {
        Some(err) => {
            print!("{}", outcome.stdout);
            Err(err)
        }
        None => Ok(outcome.stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
