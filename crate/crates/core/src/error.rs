use std::path::PathBuf;

use crate::baselines::CurveFit;

/// Errors produced by the forecasting toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    Dimension { op: &'static str, expected: String, actual: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("loss diverged (non-finite) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no start reduced the residual; best rmse {:.6e}", .best.residual_rmse)]
    NoConvergence { best: Box<CurveFit> },

    #[error("{path}:{row}:{col}: {msg}")]
    Parse { path: PathBuf, row: usize, col: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension { op, expected: expected.to_string(), actual: actual.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
