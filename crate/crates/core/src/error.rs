use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("backward called without a cached forward pass")]
    NoCachedForward,

    #[error("non-finite values in {tensor}")]
    NonFinite { tensor: String },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("action {u} outside [-{u_max}, {u_max}]")]
    ActionOutOfRange { u: f64, u_max: f64 },

    #[error("episode length {len} is shorter than the required {required}")]
    EpisodeTooShort { len: usize, required: usize },

    #[error("domain {domain} has {count} episodes, at least {required} required")]
    InsufficientEpisodes {
        domain: usize,
        count: usize,
        required: usize,
    },

    #[error("no admissible pairs: {0}")]
    NoAdmissiblePairs(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("lineage check failed: {0}")]
    Lineage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit status: 2 invalid input, 3 lineage, 4 numerical, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidDomain(_)
            | Error::ActionOutOfRange { .. }
            | Error::EpisodeTooShort { .. }
            | Error::InsufficientEpisodes { .. }
            | Error::NoAdmissiblePairs(_)
            | Error::Degenerate(_)
            | Error::DimensionMismatch { .. } => 2,
            Error::Lineage(_) => 3,
            Error::NonFinite { .. } | Error::Numerical(_) | Error::NoCachedForward => 4,
            Error::Io(_) | Error::Format { .. } => 1,
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
