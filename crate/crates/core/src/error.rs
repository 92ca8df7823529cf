use std::path::PathBuf;

use thiserror::Error;

use crate::providers::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: no trajectories to process")]
    EmptyCorpus,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error at line {line}: missing or invalid field `{field}`")]
    Schema { line: usize, field: String },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("graph format error at {pointer}: {message}")]
    GraphFormat { pointer: String, message: String },

    #[error("edit error: {0}")]
    Edit(String),

    #[error("no candidates to choose from")]
    NoCandidates,

    #[error("no turns to score")]
    NoTurns,

    #[error("synthesis failed: {0}")]
    Synth(String),

    #[error("benchmark aborted: {0}")]
    Benchmark(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn vocab(msg: impl Into<String>) -> Self {
        Error::Vocabulary(msg.into())
    }

    pub(crate) fn graph_format(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::GraphFormat {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
