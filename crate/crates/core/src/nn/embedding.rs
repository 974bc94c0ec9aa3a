use rand::Rng;

use super::{uniform, NnError, Real, Tensor};
use crate::corpus::PAD;

/// Word embedding table `[vocab_size x dim]`. Row 0 (PAD) stays zero: it is
/// zeroed at construction and never receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T: Real = f32> {
    pub weights: Tensor<T>,
}

impl<T: Real> Embedding<T> {
    /// Uniform init in `[-0.05, 0.05]`, PAD row zeroed.
    pub fn new<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut weights = uniform(&[vocab_size, dim], 0.05, rng);
        weights.row_mut(PAD as usize).iter_mut().for_each(|x| *x = T::zero());
        Embedding { weights }
    }

    pub fn from_weights(weights: Tensor<T>) -> Result<Self, NnError> {
        if weights.shape().len() != 2 {
            return Err(NnError::BadTensor(format!("embedding must be 2-d, got {:?}", weights.shape())));
        }
        Ok(Embedding { weights })
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Look up `ids`, producing a `[len x dim]` matrix.
    pub fn embed(&self, ids: &[u32]) -> Result<Tensor<T>, NnError> {
        if ids.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let dim = self.dim();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            if id >= self.vocab_size() {
                return Err(NnError::IndexOutOfRange { index: id, bound: self.vocab_size() });
            }
            data.extend_from_slice(self.weights.row(id));
        }
        Tensor::new(vec![ids.len(), dim], data)
    }

    /// Scatter-add `d_out` rows into `grad` (same shape as the table), skipping PAD.
    pub fn backward(&self, ids: &[u32], d_out: &Tensor<T>, grad: &mut Tensor<T>) -> Result<(), NnError> {
        d_out.expect_shape("embedding upstream gradient", &[ids.len(), self.dim()])?;
        grad.expect_shape("embedding gradient", self.weights.shape())?;
        for (i, &id) in ids.iter().enumerate() {
            if id == PAD {
                continue;
            }
            let src = d_out.row(i);
            for (g, &d) in grad.row_mut(id as usize).iter_mut().zip(src) {
                *g += d;
            }
        }
        Ok(())
    }
}
