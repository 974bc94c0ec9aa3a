//! Dialogue-act recognition for conversational transcripts.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: SwDA ingestion, markup cleaning, tokenization, vocabulary and splits.
//! - [`nn`]: a small numerical engine (tensors, LSTM with BPTT, dense softmax,
//!   cross-entropy, Adam, finite-difference gradient checking).
//! - [`models`]: the utterance-level (no-context) classifier and the hierarchical
//!   context classifier built on top of its frozen encoder, plus the `.dwm` file format.
//! - [`training`]: training loops, early stopping, evaluation reports and the context sweep.
//! - [`analysis`]: the inference pipeline used by the CLI and the model server.
//! - [`fixture`]: the bundled miniature corpus used for tests and smoke runs.

pub mod analysis;
pub mod corpus;
pub mod fixture;
pub mod models;
pub mod nn;
pub mod training;

/// Number of dialogue-act classes.
pub const NUM_TAGS: usize = 42;
