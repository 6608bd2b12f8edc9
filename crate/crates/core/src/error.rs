use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate tilt: total tilted mass is zero")]
    DegenerateTilt,

    #[error("non-normalizable distribution: {0}")]
    NonNormalizable(String),

    /// Two anchors are so close that the Gram matrix cannot be factorized.
    #[error("ill-conditioned anchor set: points {first} and {second} are near-duplicates (pivot {pivot:.3e})")]
    Conditioning {
        first: usize,
        second: usize,
        pivot: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("inconsistent prior and data: {0}")]
    Inconsistent(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 for configuration problems, 3 for bad or degenerate data, 4 for
    /// numerical failures. I/O failures are reported as data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::DegenerateData(_)
            | Error::Inconsistent(_)
            | Error::Domain(_)
            | Error::Conditioning { .. } => 3,
            Error::DegenerateTilt | Error::NonNormalizable(_) | Error::Numerical(_) => 4,
        }
    }
}
