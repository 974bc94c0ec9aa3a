//! Training loops, evaluation and the context-size sweep.
//!
//! Runs are deterministic for a fixed [`TrainConfig`]: one ChaCha stream
//! seeds initialisation and per-epoch shuffling, and mini-batch gradients are
//! reduced over a fixed partition of each batch regardless of thread count.

mod eval;
mod sweep;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DEFAULT_MAX_LEN, DEFAULT_MIN_COUNT};
use crate::models::{ModelDims, ModelError};
use crate::nn::{AdamConfig, NnError};

pub use eval::{
    argmax, evaluate, ConstantPredictor, ContextPredictor, EvalReport, OraclePredictor, Predictor, TagMetrics,
};
pub use sweep::{context_sweep, ResultRow, ResultsTable, SweepResult};
pub use trainer::{context_windows, train_context, train_no_context, EpochRecord, TrainRun, WindowExample};

/// What to do with utterances that have fewer than `n` predecessors in
/// their conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Leave them out of training and of accuracy denominators (counted as skipped).
    #[default]
    Skip,
    /// Fill the missing positions with zero representation vectors.
    Pad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict improvement in monitored accuracy before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub context_size: usize,
    pub boundary_policy: BoundaryPolicy,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub context_hidden: usize,
    pub max_len: usize,
    pub min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        TrainConfig {
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            learning_rate: 1e-3,
            clip_norm: Some(5.0),
            seed: 42,
            context_size: 2,
            boundary_policy: BoundaryPolicy::Skip,
            embedding_dim: dims.embedding_dim,
            hidden: dims.hidden,
            context_hidden: dims.context_hidden,
            max_len: DEFAULT_MAX_LEN,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("embedding_dim", self.embedding_dim),
            ("hidden", self.hidden),
            ("context_hidden", self.context_hidden),
            ("max_len", self.max_len),
            ("min_count", self.min_count),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c.is_finite() && c > 0.0)) {
            return Err(TrainError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims { embedding_dim: self.embedding_dim, hidden: self.hidden, context_hidden: self.context_hidden }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.learning_rate, clip_norm: self.clip_norm, ..AdamConfig::default() }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no training examples")]
    NoExamples,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
