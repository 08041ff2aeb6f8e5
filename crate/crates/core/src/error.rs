use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {op}: {reason} (got {value})")]
    Domain {
        op: &'static str,
        reason: &'static str,
        value: f64,
    },

    #[error("size mismatch: expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("entropy variable {value} exceeds the clamp bound {bound}; treating as divergence")]
    Divergence { value: f64, bound: f64 },

    #[error("coefficient determinant {value} is not positive")]
    NonPositiveDeterminant { value: f64 },

    #[error("singular pivot at row {row} in banded factorization")]
    SingularMatrix { row: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("unknown test function id {0:?}")]
    UnknownTestFunction(String),

    #[error("oracle: {0}")]
    Oracle(String),

    #[error(transparent)]
    Step(#[from] Box<crate::scheme::StepFailure>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: &'static str, value: f64) -> Self {
        Error::Domain { op, reason, value }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
