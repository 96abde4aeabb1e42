use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("infeasible linear program: {0}")]
    Infeasible(String),
    #[error("unbounded linear program: {0}")]
    Unbounded(String),
    #[error("bad input data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Data(_) => 1,
            Error::Io { .. } => 2,
            Error::Domain(_) | Error::Numeric(_) | Error::Infeasible(_) | Error::Unbounded(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
