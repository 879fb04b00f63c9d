use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The container header could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree (shape vs. byte length, offsets out of range).
    #[error("corrupt tensor `{tensor}`: {reason}")]
    Corruption { tensor: String, reason: String },

    /// A tensor contains NaN or an infinity.
    #[error("tensor `{tensor}` has non-finite value {value} at flat index {index}")]
    NonFinite {
        tensor: String,
        index: usize,
        value: f32,
    },

    #[error("layer selection failed: {0}")]
    Selection(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("criterion error: {0}")]
    Criterion(String),

    #[error("plan error: {0}")]
    Plan(String),

    /// Store shapes are inconsistent with the architecture's successor relation.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("architecture spec error: {0}")]
    Spec(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
