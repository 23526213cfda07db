use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step diverged at t = {time}: projected Gauss-Seidel hit {sweeps} sweeps with relative residual {residual:e}")]
    StepDivergence {
        time: f64,
        sweeps: usize,
        residual: f64,
    },

    #[error("trajectory is incomplete (run stopped at t = {0})")]
    IncompleteRun(f64),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("preprocessor used before fit")]
    NotFitted,

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("capacity exceeded: {rows} rows > cap {cap} for a dense kernel matrix")]
    Capacity { rows: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {0} (non-finite loss)")]
    TrainingDiverged(usize),

    #[error("R^2 undefined for constant targets")]
    UndefinedScore,

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
