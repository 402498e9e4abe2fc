//! `tnet`: train, evaluate and inspect TNet sentiment classifiers.
//!
//! Every command writes its result as JSON on stdout. Exit status is 0 when
//! the result was fully produced, 2 for usage errors and missing files, 3
//! when a gradient check fails and 1 for anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::TrainFlags;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    CheckFailed(String),
    Failed(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::CheckFailed(m) => f.write_str(m),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 3,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<tnet::Error> for CliError {
    fn from(e: tnet::Error) -> Self {
        use tnet::Error as E;
        match e {
            E::Config(_) | E::Parse { .. } | E::SpanOutOfRange { .. } | E::EmbeddingDim { .. } | E::Checkpoint(_) => {
                CliError::Usage(e.to_string())
            }
            E::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Usage(e.to_string()),
            other => CliError::Failed(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tnet", version, about = "Target-specific transformation networks for targeted sentiment")]
struct Cli {
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one or more runs and write checkpoints under --out.
    Train(TrainFlags),
    /// Score checkpoints on a labelled test file.
    Eval(commands::EvalArgs),
    /// Classify one sentence and show the n-gram chosen by max pooling.
    Predict(commands::PredictArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(commands::GradcheckArgs),
    /// Train and test every variant with the same settings.
    Ablate(commands::AblateArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Train(flags) => commands::train(&flags, &file),
        Command::Eval(args) => commands::eval(&args, &file),
        Command::Predict(args) => commands::predict(&args),
        Command::Gradcheck(args) => commands::gradcheck(&args),
        Command::Ablate(args) => commands::ablate(&args, &file),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
