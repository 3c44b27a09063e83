use thiserror::Error;

/// Errors produced by basis construction, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Column index is 0-based.
    #[error("rank deficient at column {column}: {context}")]
    RankDeficient { column: usize, context: String },

    #[error("exposure support set is empty")]
    NoSupport,

    #[error("no usable candidates ({skipped} skipped)")]
    NoCandidates { skipped: usize },

    #[error("values have no unique plurality mode")]
    NoUniqueMode,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NoSupport => "no-support",
            Error::NoCandidates { .. } => "no-candidates",
            Error::NoUniqueMode => "no-unique-mode",
            Error::Degenerate(_) => "degenerate",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code used by the CLI: 2 for configuration and argument
    /// problems, 3 for data problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 2,
            Error::Parse { .. } | Error::Io(_) => 3,
            Error::RankDeficient { .. }
            | Error::NoSupport
            | Error::NoCandidates { .. }
            | Error::NoUniqueMode
            | Error::Degenerate(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
