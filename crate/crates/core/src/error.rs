use thiserror::Error;

/// Errors raised by builders, evaluators and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A construction would exceed a configured size cap. `requested` and `cap`
    /// use the same unit, named in `what`.
    #[error("size cap exceeded for {what}: requested {requested:.4e}, cap {cap:.4e}")]
    SizeCap { what: String, requested: f64, cap: f64 },

    #[error("point {0:?} is not covered by any ball")]
    BrokenCover(Vec<f64>),

    #[error("encoding self-test failed: {0}")]
    Encoding(String),

    #[error("oracle evaluation failed: {0}")]
    Oracle(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
