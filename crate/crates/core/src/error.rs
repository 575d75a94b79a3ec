use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A malformed hypothesis text.
///
/// `position` is 1-based. Expression parsers count tokens, the edge-list and
/// layer parsers count characters of the extracted block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(position: usize, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(String),

    #[error("graph contains a cycle")]
    Cyclic,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("enumeration limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("admissible-set size overflows u64")]
    Overflow,

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("cannot score an empty run")]
    EmptyRun,

    #[error("entropy of an empty prefix is undefined")]
    EmptyPrefix,

    #[error("empty aggregation group: {0}")]
    EmptyGroup(String),

    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),

    #[error("unknown operator `{0}`")]
    UnknownOperator(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed run log: {0}")]
    MalformedLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
