use std::io;

use crate::trainer::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("checkpoint integrity check failed: stored crc {stored:#010x}, computed {computed:#010x}")]
    Integrity { stored: u32, computed: u32 },

    #[error("unsupported checkpoint version {0:?}")]
    Version(u8),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("enumeration of {bits} bits exceeds budget of {budget}")]
    Capacity { bits: usize, budget: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        partial: Box<TrainTrace>,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Integrity { .. } => "integrity",
            Error::Version(_) => "version",
            Error::Format(_) => "format",
            Error::Parse { .. } => "parse",
            Error::Capacity { .. } => "capacity",
            Error::Numeric(_) => "numeric",
            Error::Diverged { .. } => "diverged",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
