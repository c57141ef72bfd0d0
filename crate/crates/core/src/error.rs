use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} objectives, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("exact hypervolume supports at most 3 objectives, got {0}")]
    UnsupportedDimension(usize),

    #[error("empty pool")]
    EmptyPool,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("SKILL.md parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("task error: {0}")]
    Task(String),

    #[error("report I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
