//! The `hdlcnn` command-line driver. Every step reads and writes files named
//! in the run config, so the subcommands can be chained or rerun separately.

mod commands;
mod config;

pub use config::{apply_override, IngestSettings, LabeledCsv, Paths, RunConfig};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(m) | ModelError::Train(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Model(m) => m.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hdlcnn", version, about = "Fault diagnosis for multivariate time series with clustered dilated CNNs and Deep SHAP")]
pub struct Cli {
    /// JSON run config; defaults are used for anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=10` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic train/test datasets and their planted root causes.
    Simulate,
    /// Window and normalize CSV files into train/test datasets.
    Ingest,
    /// Ward-cluster the training features and write the feature ordering.
    Cluster,
    /// Train a model on the reordered training set.
    Train,
    /// Score the model on the test set.
    Evaluate,
    /// Attribute fault-class test windows to features and name the root cause.
    Explain,
    /// simulate, cluster, train, evaluate and explain in sequence.
    Run,
    /// Print the run config JSON schema.
    Schema,
    /// Print the fully resolved run config.
    ShowConfig,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Command::Schema = cli.command {
        println!("{}", RunConfig::schema());
        return Ok(());
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Ingest => commands::ingest(&cfg),
        Command::Cluster => commands::cluster(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Explain => commands::explain(&cfg),
        Command::Run => {
            commands::simulate(&cfg)?;
            commands::cluster(&cfg)?;
            commands::train(&cfg)?;
            commands::evaluate(&cfg)?;
            commands::explain(&cfg)
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(())
        }
        Command::Schema => unreachable!(),
    }
}
