//! CLI error taxonomy mapped onto process exit codes.
//!
//! Exit codes: 0 success, 2 validation failure (malformed or inconsistent
//! data), 3 numerical failure (estimation could not proceed), 4
//! configuration failure (bad arguments, missing paths, unparseable
//! config).

use std::path::Path;

use climpanel_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Config(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Annotates an error with the file it arose from.
    pub fn in_file(self, path: &Path) -> Self {
        let tag = path.display();
        match self {
            CliError::Config(m) => CliError::Config(format!("{tag}: {m}")),
            CliError::Validation(m) => CliError::Validation(format!("{tag}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{tag}: {m}")),
        }
    }

    /// Annotates an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("[{stage}] {m}")),
            CliError::Validation(m) => CliError::Validation(format!("[{stage}] {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("[{stage}] {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::ConvergenceFailure { .. }
            | CoreError::CollinearDesign { .. }
            | CoreError::DegenerateClustering { .. }
            | CoreError::TooFewObservations { .. }
            | CoreError::TooFewGroups { .. } => CliError::Numerical(err.to_string()),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Validation(err.to_string())
    }
}
