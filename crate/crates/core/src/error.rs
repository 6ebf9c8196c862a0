use std::io;

use thiserror::Error;

use crate::NGram;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: malformed ARPA header: {msg}")]
    MalformedHeader { line: usize, msg: String },

    #[error("line {line}: malformed entry: {msg}")]
    MalformedEntry { line: usize, msg: String },

    #[error("line {line}: unparsable float {text:?}")]
    InvalidFloat { line: usize, text: String },

    #[error("order-count mismatch for order {order}: declared {declared}, found {found}")]
    CountMismatch {
        order: usize,
        declared: usize,
        found: usize,
    },

    #[error("duplicate n-gram {0}")]
    DuplicateNGram(String),

    #[error("closure violation: {ngram} is stored but its {missing} is not")]
    Closure { ngram: String, missing: &'static str },

    #[error("token id {0} is not in the vocabulary")]
    UnknownToken(u32),

    #[error("out-of-vocabulary token {0:?}")]
    OutOfVocabulary(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero probability event: {0}")]
    ZeroProbability(String),

    #[error("non-positive normalizer {value} at history {history:?}")]
    NonPositiveNormalizer { history: NGram, value: f64 },

    #[error("missing normalizer for history {0:?}")]
    MissingNormalizer(NGram),

    #[error("GIS diverged at iteration {iter}: max |log ratio| = {value}")]
    Diverged { iter: usize, value: f64 },

    #[error("size guard exceeded: {0}")]
    GuardExceeded(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
