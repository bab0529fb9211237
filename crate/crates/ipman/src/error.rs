//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension mismatch between operands.
    #[error("shape error in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Negative doses, non-finite inputs and similar domain violations.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("training error in {stage} at iteration {iteration}: {message}")]
    Training {
        stage: &'static str,
        iteration: usize,
        message: String,
    },

    /// No feasible generated sample was found when certifying a solution.
    #[error("certificate failure: {0}")]
    Certificate(String),

    #[error("missing upstream artifact: {0} (run the producing subcommand first)")]
    MissingArtifact(PathBuf),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
