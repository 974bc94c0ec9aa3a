//! Minimal numerical engine for the recurrent classifiers.
//!
//! Everything is generic over [`Real`] so the same code runs in 32-bit for
//! training and inference and in 64-bit for finite-difference gradient checks.
//!
//! LSTM gate order is fixed as (input, forget, cell candidate, output) along
//! the `4 * hidden` axis of every LSTM weight tensor and bias.

mod adam;
mod dense;
mod embedding;
mod gradcheck;
mod init;
mod lstm;
mod params;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use thiserror::Error;

pub use adam::{adam_step, clip_factor, AdamConfig, AdamState};
pub use dense::{cross_entropy, dense_backward, dense_logits, dense_softmax, softmax, DenseParams, PROB_FLOOR};
pub use embedding::Embedding;
pub use gradcheck::{gradcheck, GradcheckReport, ParamCheck};
pub use init::{glorot_uniform, uniform};
pub use lstm::{lstm_backward, lstm_forward, lstm_step, LstmParams, LstmStepCache, LstmTrace};
pub use params::{GradientStore, ParamSet};
pub use tensor::Tensor;

/// Floating point type the engine runs on (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Sum + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{context}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { context: &'static str, expected: Vec<usize>, found: Vec<usize> },
    #[error("index {index} out of range for {bound} rows")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("sequence must contain at least one step")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid tensor: {0}")]
    BadTensor(String),
    #[error("cache does not match parameters: {0}")]
    StaleCache(String),
    #[error("gradient store mismatch: {0}")]
    GradientKeys(String),
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn check_len<T>(context: &'static str, v: &[T], expected: usize) -> Result<(), NnError> {
    if v.len() != expected {
        return Err(NnError::ShapeMismatch { context, expected: vec![expected], found: vec![v.len()] });
    }
    Ok(())
}
