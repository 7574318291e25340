//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no user has at least {min_len} interactions")]
    EmptyDataset { min_len: usize },

    #[error("user {user}: {available} items available for negative sampling, {needed} needed")]
    InsufficientNegatives {
        user: u32,
        available: usize,
        needed: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no whole-word embedding for cold entity {0}")]
    ColdEntity(String),

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("no beam decoded to a valid item id")]
    EmptyOutput,

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Io(_) | Error::Parse { .. } | Error::Format(_) => 3,
            Error::Numeric(_) | Error::Shape(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
