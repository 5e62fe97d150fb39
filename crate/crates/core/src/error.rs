use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in per-method failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::Domain(_) => "DomainError",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::DegenerateData(_) => "DegenerateData",
            Error::SingularCovariance(_) => "SingularCovariance",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::MissingData(_) => "MissingData",
            Error::Io { .. } => "IoError",
        }
    }
}
