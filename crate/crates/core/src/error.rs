use std::fmt;

use crate::render::Channel;

/// Errors surfaced by the watermarking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("routing integrity error: gaussian {index} received a {source_loss} gradient on {channel}")]
    Routing {
        index: usize,
        channel: Channel,
        source_loss: LossSide,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("verification failed: bit accuracy {bit_acc:.4} below gate {min:.4}")]
    Verification { bit_acc: f64, min: f64 },
}

/// Which objective a gradient came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSide {
    Watermark,
    Visual,
}

impl fmt::Display for LossSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSide::Watermark => f.write_str("watermark"),
            LossSide::Visual => f.write_str("visual"),
        }
    }
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Io(_) | Error::Parse(_) | Error::Data(_) | Error::NonFinite(_) => 3,
            Error::Routing { .. } => 3,
            Error::Verification { .. } => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
