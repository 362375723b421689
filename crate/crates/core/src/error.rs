use thiserror::Error;

use crate::catalog::VideoId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    #[error("unknown video {0}")]
    UnknownVideo(VideoId),

    #[error("capacity error: requested {requested} blocks, {free} free")]
    Capacity { requested: u64, free: u64 },

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("no prefix allocation for video {0}")]
    MissingAllocation(VideoId),

    #[error("invariant violated at t={time:.6} ({event}): {message}")]
    Invariant {
        time: f64,
        event: &'static str,
        message: String,
    },

    #[error("trace error: {0}")]
    Trace(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Trace(err.to_string())
    }
}
