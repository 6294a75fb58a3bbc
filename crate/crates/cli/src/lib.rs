//! Command-line workflows and the annotation HTTP API.

pub mod commands;
pub mod config;
mod error;
pub mod report;
pub mod server;

use clap::Parser;

pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING};

#[derive(Debug, Parser)]
#[command(name = "debacer", version, about = "Partition moderated debates into speech blocks")]
pub struct Cli {
    #[command(flatten)]
    pub global: config::GlobalArgs,
    #[command(subcommand)]
    pub command: commands::Command,
}

/// Resolves the configuration and runs the command; returns the report path.
pub fn run(cli: &Cli) -> Result<std::path::PathBuf, CliError> {
    let cfg = config::RunConfig::resolve(&cli.global)?;
    commands::execute(&cfg, &cli.command)
}
