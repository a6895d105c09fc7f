use std::path::Path;

use cfrec_core::Error as CoreError;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

/// Failures grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(_) | CoreError::InvalidRate(_) | CoreError::Checkpoint { .. } => {
                CliError::Config(msg)
            }
            CoreError::NonFiniteLoss { .. }
            | CoreError::Divergence { .. }
            | CoreError::DegenerateVector { .. }
            | CoreError::NonFinite(_) => CliError::Divergence(msg),
            CoreError::Parse { .. }
            | CoreError::EmptyDataset
            | CoreError::TooFewUsers(_)
            | CoreError::Vocabulary { .. }
            | CoreError::SequenceTooShort { .. }
            | CoreError::TooManyNegatives { .. }
            | CoreError::TooManyRequested { .. }
            | CoreError::Io { .. } => CliError::Data(msg),
            _ => CliError::Other(msg),
        }
    }
}
