//! Library side of the `crosspmf` command: configuration, the four commands and
//! their output files.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use thiserror::Error;

use crosspmf::analysis::AnalysisError;
use crosspmf::formats::FormatError;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Schema(_) => 5,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Schema(e.to_string())
    }
}
