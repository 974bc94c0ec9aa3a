//! The two classifiers and their on-disk format.
//!
//! [`NoContextModel`] labels an utterance from its own words. [`ContextModel`]
//! feeds the frozen utterance representations of a sliding window of
//! `n + 1` utterances into a second LSTM.

mod context;
mod file;
mod nets;
mod no_context;

use std::path::PathBuf;

use thiserror::Error;

use crate::nn::NnError;

pub use context::ContextModel;
pub use file::{
    decode_model, encode_context, encode_no_context, load_context, load_model, load_no_context, save_context,
    save_no_context, LoadedModel, ModelKind, FORMAT_VERSION, MAGIC,
};
pub use nets::{ContextNet, HierarchicalNet, UtteranceNet, UtteranceTrace};
pub use no_context::NoContextModel;

/// Layer widths. Word embeddings are 50-d and both LSTMs have 64 units by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub embedding_dim: usize,
    pub hidden: usize,
    pub context_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { embedding_dim: 50, hidden: 64, context_hidden: 64 }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("model file format version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("model file checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("expected a {expected} model, file holds a {found} model")]
    WrongKind { expected: ModelKind, found: ModelKind },
    #[error("context window must hold {expected} utterances, got {found}")]
    WindowLength { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
