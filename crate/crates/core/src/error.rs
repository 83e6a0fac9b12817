use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; `offset` is the byte position where parsing stopped.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// A caller broke an operation's precondition (mismatched grids, bad config).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data violates a type invariant (non-finite coordinates and the like).
    #[error("invalid data: {0}")]
    Data(String),

    /// Dataset generation could not proceed (for example, no freespace to sample).
    #[error("generation failed: {0}")]
    Generation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    /// Short machine-readable kind, used by the CLI for its error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Json(_) => "parse",
            Error::Contract(_) => "contract",
            Error::Data(_) => "contract",
            Error::Generation(_) => "contract",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
