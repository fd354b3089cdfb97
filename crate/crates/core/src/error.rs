use thiserror::Error;

/// Errors produced by the simulator and its detectors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("fronthaul budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("message passing diverged at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("threshold calibration set is empty")]
    EmptyCalibration,

    #[error("metrics accumulator holds no trials")]
    EmptyAccumulator,

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
