use std::path::PathBuf;

use regime_lab::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// `line` is 1-based; 0 when the parser gave no position.
    #[error("config line {line}, key `{key}`: {message}")]
    ConfigParse { line: usize, key: String, message: String },

    #[error("invalid model: {0}")]
    ModelInvalid(#[from] LabError),

    #[error("{}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigParse { .. } | CliError::Usage(_) => 2,
            CliError::ModelInvalid(_) => 3,
            CliError::IoFailure { .. } => 4,
        }
    }
}
