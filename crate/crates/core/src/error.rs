use thiserror::Error;

use crate::sequence::SequenceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    /// The time grid cannot represent the fastest oscillation in the run.
    #[error("resolution error: grid step {step_s:e} s exceeds 1/(20·{max_detuning_hz:e} Hz) = {limit_s:e} s")]
    Resolution { step_s: f64, max_detuning_hz: f64, limit_s: f64 },

    #[error(transparent)]
    Sequence(#[from] SequenceError),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the command-line tool: 1 for unreadable or
    /// malformed input, 2 for invalid values, 3 for an unresolvable grid.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Config { .. } => 1,
            Error::Sequence(e) if !e.is_semantic() => 1,
            Error::Resolution { .. } => 3,
            _ => 2,
        }
    }
}
