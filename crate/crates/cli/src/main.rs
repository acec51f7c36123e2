//! `cfrec`: ingest rating logs, train recommenders, explain and verify top-1 recommendations.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Input or configuration problem (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser, Debug)]
#[command(
    name = "cfrec",
    version,
    about = "Counterfactual explanations for NCF and FM recommenders"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Master seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (for `ingest`, a `.csv` path is also accepted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a dataset into the canonical CSV and print its statistics.
    Ingest(commands::IngestArgs),
    /// Train a model and write a checkpoint plus the loss trace.
    Train(commands::TrainArgs),
    /// Explain the top-1 recommendation of sampled users.
    Explain(commands::ExplainArgs),
    /// Verify explanations by retraining and report ESP/AES per K.
    Evaluate(commands::EvaluateArgs),
    /// Sweep the embedding size and report MSE, ESP and AES per size.
    Sweep(commands::SweepArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cfrec::Error>() {
            return if e.is_numeric() { 3 } else { 2 };
        }
        if cause.downcast_ref::<InputError>().is_some()
            || cause.downcast_ref::<clap::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
