use std::path::Path;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("config line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{0}` given twice")]
    DuplicateKey(String),
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("invalid value `{value}` for config key `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("`{key}` has {got} entries, expected {expected}")]
    Dimension { key: String, expected: usize, got: usize },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed dataset: {0}")]
    Dataset(String),
    #[error("unsupported {kind} version `{version}`")]
    UnsupportedVersion { kind: &'static str, version: String },
    #[error("unknown checkpoint array `{0}`")]
    UnknownArray(String),
    #[error("checkpoint array `{0}` is missing")]
    MissingArray(String),
    #[error("checkpoint array `{name}` has {got} values, expected {expected}")]
    ArrayLength { name: String, expected: usize, got: usize },
    #[error("checkpoint array `{name}`: cannot parse `{value}`")]
    BadValue { name: String, value: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite { iteration: usize, quantity: String },
    #[error("{0}")]
    Model(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<gasolve_core::Error> for CliError {
    fn from(e: gasolve_core::Error) -> Self {
        match e {
            gasolve_core::Error::NonFinite { iteration, quantity } => CliError::NonFinite {
                iteration,
                quantity: quantity.to_string(),
            },
            other => CliError::Model(other.to_string()),
        }
    }
}
