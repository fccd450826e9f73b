use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("retraction step is rank deficient")]
    DegenerateStep,
    #[error("non-finite value encountered at iterate {iteration}")]
    NonFinite { iteration: usize },
    #[error("empty data")]
    EmptyData,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("gram matrix too ill-conditioned: jitter {jitter:e} exceeds limit {limit:e}")]
    Conditioning { jitter: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input) map to exit code 2 in the CLI.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite
                | Error::DegenerateStep
                | Error::NonFinite { .. }
                | Error::Conditioning { .. }
        )
    }
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
