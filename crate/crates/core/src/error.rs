use std::fmt;

use thiserror::Error;

use crate::functor::MonoidId;

/// A syntax or shape error in an input file, with a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("overflow in monoid {0:?}")]
    Overflow(MonoidId),
    #[error("overflow in bag multiplicity")]
    BagOverflow,
    #[error("no block id known for state {0}")]
    MissingBlock(u32),
    #[error("edge tag does not match summand of state")]
    TagMismatch,
    #[error("encoded data does not match the functor layout: {0}")]
    Shape(&'static str),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("connection to worker {peer} failed: {source}")]
    Connect {
        peer: u32,
        #[source]
        source: std::io::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error("transport closed")]
    Closed,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("worker {worker}: {message}")]
    Violation { worker: u32, message: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("input slice mismatch: {0}")]
    Slice(String),
}

impl ProtocolError {
    pub fn violation(worker: u32, message: impl Into<String>) -> Self {
        ProtocolError::Violation {
            worker,
            message: message.into(),
        }
    }
}

/// Top-level error of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl From<TransportError> for Error {
    fn from(e: TransportError) -> Self {
        Error::Protocol(ProtocolError::Transport(e))
    }
}

impl Error {
    /// Whether this error is (or wraps) an arithmetic overflow.
    pub fn is_overflow(&self) -> bool {
        let sig = match self {
            Error::Signature(s) => s,
            Error::Protocol(ProtocolError::Signature(s)) => s,
            _ => return false,
        };
        matches!(sig, SignatureError::Overflow(_) | SignatureError::BagOverflow)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
