// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unknown relation `{relation}` at line {line}")]
    UnknownRelation { relation: String, line: usize },

    #[error("fictional name space exhausted after {assigned} of {needed} names; use a larger syllable inventory or more syllables per name")]
    NameSpaceExhausted { assigned: usize, needed: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("template {template} is for relation {template_relation}, triple has {triple_relation}")]
    RelationMismatch {
        template: usize,
        template_relation: String,
        triple_relation: String,
    },

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },

    #[error("sequence of length {len} exceeds context length {context_len}")]
    SequenceTooLong { len: usize, context_len: usize },

    #[error("batch contains no non-PAD prediction targets")]
    EmptyBatch,

    #[error("non-finite activation at node {node}")]
    NonFinite { node: String },

    #[error("graph mismatch: {0}")]
    GraphMismatch(String),

    #[error("all {0} pairs are degenerate (clean and corrupted metrics coincide)")]
    AllPairsDegenerate(usize),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("pipeline step `{step}` failed: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
