use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("material error: {0}")]
    Material(String),

    #[error("{message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("incompatible pure-Neumann problem: source/boundary defect {defect:.3e}")]
    Compatibility { defect: f64 },

    #[error("close non-connected fractures unresolved at maximum level {max_level}: edge pairs {pairs:?}")]
    ResolutionFailure { max_level: u8, pairs: Vec<(usize, usize)> },

    #[error("interpretation failed: subelements {0:?} could not be assigned")]
    Interpretation(Vec<(usize, usize)>),

    #[error("{path}:{line}: {message}")]
    Ingestion { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
