use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid document: {0}")]
    InvalidDocument(String),

    #[error("unknown domain `{0}`")]
    UnknownDomain(String),

    #[error("unknown slot `{0}`")]
    UnknownSlot(String),

    #[error("domain `{0}` has no entity database")]
    NoEntityDb(String),

    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,

    #[error("empty word")]
    EmptyWord,

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("max length {max_len} cannot hold the {required} tokens of specials, slot and [DB] segments")]
    MaxLenTooSmall { max_len: usize, required: usize },

    #[error("operation for slot `{0}` is missing")]
    MissingOperation(String),

    #[error("UPDATE operation for slot `{0}` has no value")]
    UpdateWithoutValue(String),

    #[error("invalid operation: {0}")]
    InvalidOperation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no turns to evaluate")]
    EmptyInput,

    #[error("unknown dialogue id `{0}`")]
    UnknownDialogue(String),

    #[error("invalid policy: {0}")]
    Policy(String),

    // The inner error is part of the message, so it is not also exposed as
    // a `source`; chained reporters would otherwise print it twice.
    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<Error>,
    },

    #[error("{}: {inner}", path.display())]
    Io {
        path: PathBuf,
        inner: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            inner: source,
        }
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            inner: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
