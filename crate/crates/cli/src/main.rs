//! `vtt`: train and evaluate questioning strategies against simulated
//! question-answering responders on a DME-grading task.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl From<vtt_core::Error> for CliError {
    fn from(e: vtt_core::Error) -> Self {
        match e {
            vtt_core::Error::InvalidInput(msg) => CliError::Config(msg),
            vtt_core::Error::SchemaViolation { .. } | vtt_core::Error::Io(_) => CliError::Data(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "vtt", about = "Questioning-strategy training and responder evaluation", version)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,

    /// Replace the config's master seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotation dataset and its split manifest.
    Generate,
    /// Train the configured scheme and write the best checkpoint.
    Train,
    /// Write reward tables and episode logs per strategy-responder pair.
    Evaluate,
    /// Run the responder-separation analysis.
    Separate,
    /// Unroll a strategy into a Graphviz DOT tree.
    ExportTree {
        /// Strategy name as configured (random, textbook, dt-rb, dt-tb, rl-q, rl-mc).
        #[arg(long)]
        qs: String,
        /// Question layers to expand.
        #[arg(long, default_value_t = 6)]
        depth: usize,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::load(&cli.config, cli.seed_override)?;
    match &cli.command {
        Command::Generate => commands::cmd_generate(&config, cli.force),
        Command::Train => commands::cmd_train(&config, cli.force),
        Command::Evaluate => commands::cmd_evaluate(&config, cli.force),
        Command::Separate => commands::cmd_separate(&config, cli.force),
        Command::ExportTree { qs, depth } => commands::cmd_export_tree(&config, qs, *depth, cli.force),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
