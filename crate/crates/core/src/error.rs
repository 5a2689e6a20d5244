use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("covariance is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("cannot fit a Gaussian to an empty point set")]
    EmptyCluster,

    #[error("need at least 3 positively weighted pairs, got {0}")]
    TooFewPairs(usize),

    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),

    #[error("graph has {0} vertices; exhaustive search is limited to 25")]
    GraphTooLarge(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
