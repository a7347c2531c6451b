use std::fmt;

/// Errors surfaced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad geometry, constants or scenario wiring.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation that would break a structural invariant of the cache or
    /// coloring state. These indicate a bug in the calling layer.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },

    /// Two inputs that must agree (trace vs. config, report vs. report) do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Where in a text input a parse error was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    /// 1-based line number.
    pub line: usize,
    /// Byte offset from the start of the input.
    pub offset: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, byte offset {}", self.line, self.offset)
    }
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn parse(line: usize, offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            location: Location { line, offset },
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
