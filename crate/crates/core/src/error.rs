use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
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

    #[error("duplicate date {date} at line {line}")]
    DuplicateDate { date: String, line: usize },

    #[error("nonpositive price {value} for asset {asset} on {date}")]
    NonPositivePrice {
        asset: String,
        date: String,
        value: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("degenerate distance distribution (all pairwise distances equal)")]
    DegenerateDistances,

    #[error("isolated point {index}: affinity row sums to zero")]
    IsolatedPoint { index: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("fit for cell ({row}, {col}) did not converge: {reason}")]
    NoConvergence { row: usize, col: usize, reason: String },

    #[error("linear algebra failure: {0}")]
    LinAlg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
