//! Precision-generic network stacks with full backward passes. The f32
//! instances back the deployed models; f64 instances are used for gradient
//! checking.

use rand::Rng;

use crate::nn::{
    cross_entropy, dense_backward, dense_softmax, lstm_backward, lstm_forward, DenseParams, Embedding, LstmParams,
    LstmTrace, NnError, ParamSet, Real, Tensor,
};

pub(crate) fn visit_prefixed<'a, T: Real, P: ParamSet<T>>(
    prefix: &str,
    inner: &'a P,
    f: &mut dyn FnMut(&str, &'a Tensor<T>),
) {
    inner.visit_params(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

pub(crate) fn visit_prefixed_mut<T: Real, P: ParamSet<T>>(
    prefix: &str,
    inner: &mut P,
    f: &mut dyn FnMut(&str, &mut Tensor<T>),
) {
    inner.visit_params_mut(&mut |name, t| f(&format!("{prefix}.{name}"), t));
}

/// Word embedding, utterance LSTM and output layer: the no-context classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceNet<T: Real = f32> {
    pub embedding: Embedding<T>,
    pub encoder: LstmParams<T>,
    pub output: DenseParams<T>,
}

/// Forward intermediates of [`UtteranceNet`] needed for its backward pass.
#[derive(Debug, Clone)]
pub struct UtteranceTrace<T: Real = f32> {
    pub ids: Vec<u32>,
    pub representation: Vec<T>,
    pub lstm: LstmTrace<T>,
}

impl<T: Real> UtteranceNet<T> {
    pub fn new<R: Rng + ?Sized>(
        vocab_size: usize,
        embedding_dim: usize,
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        UtteranceNet {
            embedding: Embedding::new(vocab_size, embedding_dim, rng),
            encoder: LstmParams::new(embedding_dim, hidden, rng),
            output: DenseParams::new(hidden, classes, rng),
        }
    }

    /// Same shapes, every entry zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.zero_all();
        out
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.encoder.validate()?;
        if self.encoder.input_dim() != self.embedding.dim() {
            return Err(NnError::ShapeMismatch {
                context: "encoder input",
                expected: vec![self.embedding.dim()],
                found: vec![self.encoder.input_dim()],
            });
        }
        if self.output.input_dim() != self.encoder.hidden() {
            return Err(NnError::ShapeMismatch {
                context: "output layer input",
                expected: vec![self.encoder.hidden()],
                found: vec![self.output.input_dim()],
            });
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden()
    }

    /// Last hidden state of the utterance LSTM over the embedded ids.
    pub fn represent(&self, ids: &[u32]) -> Result<UtteranceTrace<T>, NnError> {
        let embedded = self.embedding.embed(ids)?;
        let (representation, lstm) = lstm_forward(&embedded, &self.encoder)?;
        Ok(UtteranceTrace { ids: ids.to_vec(), representation, lstm })
    }

    pub fn predict(&self, ids: &[u32]) -> Result<Vec<T>, NnError> {
        dense_softmax(&self.represent(ids)?.representation, &self.output)
    }

    pub fn loss(&self, ids: &[u32], target: usize) -> Result<T, NnError> {
        cross_entropy(&self.predict(ids)?, target)
    }

    /// Backpropagate a gradient on the representation into the embedding and
    /// encoder parameters of `grads`.
    pub fn backward_representation(
        &self,
        trace: &UtteranceTrace<T>,
        d_rep: &[T],
        grads: &mut Self,
    ) -> Result<(), NnError> {
        let d_embedded = lstm_backward(&self.encoder, &trace.lstm, d_rep, &mut grads.encoder)?;
        self.embedding.backward(&trace.ids, &d_embedded, &mut grads.embedding.weights)
    }

    /// Cross-entropy loss for one example; gradients are added into `grads`.
    pub fn loss_and_grad(&self, ids: &[u32], target: usize, grads: &mut Self) -> Result<T, NnError> {
        let trace = self.represent(ids)?;
        let probs = dense_softmax(&trace.representation, &self.output)?;
        let loss = cross_entropy(&probs, target)?;
        let d_rep = dense_backward(&self.output, &trace.representation, &probs, target, &mut grads.output)?;
        self.backward_representation(&trace, &d_rep, grads)?;
        Ok(loss)
    }
}

impl<T: Real> ParamSet<T> for UtteranceNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        f("embedding", &self.embedding.weights);
        visit_prefixed("encoder", &self.encoder, f);
        visit_prefixed("output", &self.output, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f("embedding", &mut self.embedding.weights);
        visit_prefixed_mut("encoder", &mut self.encoder, f);
        visit_prefixed_mut("output", &mut self.output, f);
    }
}

/// Second-level LSTM over utterance representations plus its own output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextNet<T: Real = f32> {
    pub lstm: LstmParams<T>,
    pub output: DenseParams<T>,
}

impl<T: Real> ContextNet<T> {
    pub fn new<R: Rng + ?Sized>(rep_dim: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        ContextNet { lstm: LstmParams::new(rep_dim, hidden, rng), output: DenseParams::new(hidden, classes, rng) }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.zero_all();
        out
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.lstm.validate()?;
        if self.output.input_dim() != self.lstm.hidden() {
            return Err(NnError::ShapeMismatch {
                context: "context output layer input",
                expected: vec![self.lstm.hidden()],
                found: vec![self.output.input_dim()],
            });
        }
        Ok(())
    }

    /// `reps` is `[window x rep_dim]`, oldest utterance first.
    pub fn predict(&self, reps: &Tensor<T>) -> Result<Vec<T>, NnError> {
        let (h, _) = lstm_forward(reps, &self.lstm)?;
        dense_softmax(&h, &self.output)
    }

    /// Loss for one window; parameter gradients go into `grads` and the
    /// gradient w.r.t. each representation row is returned.
    pub fn loss_and_grad(&self, reps: &Tensor<T>, target: usize, grads: &mut Self) -> Result<(T, Tensor<T>), NnError> {
        let (h, trace) = lstm_forward(reps, &self.lstm)?;
        let probs = dense_softmax(&h, &self.output)?;
        let loss = cross_entropy(&probs, target)?;
        let d_h = dense_backward(&self.output, &h, &probs, target, &mut grads.output)?;
        let d_reps = lstm_backward(&self.lstm, &trace, &d_h, &mut grads.lstm)?;
        Ok((loss, d_reps))
    }
}

impl<T: Real> ParamSet<T> for ContextNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        visit_prefixed("context", &self.lstm, f);
        visit_prefixed("context_output", &self.output, f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        visit_prefixed_mut("context", &mut self.lstm, f);
        visit_prefixed_mut("context_output", &mut self.output, f);
    }
}

/// The two-level network end to end. Deployed context models keep the
/// utterance level frozen; this joint form exists so the full hierarchical
/// backward path can be gradient-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalNet<T: Real = f64> {
    pub utterance: UtteranceNet<T>,
    pub context: ContextNet<T>,
}

impl<T: Real> HierarchicalNet<T> {
    fn stack(&self, window: &[Vec<u32>]) -> Result<(Vec<UtteranceTrace<T>>, Tensor<T>), NnError> {
        if window.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let traces = window.iter().map(|ids| self.utterance.represent(ids)).collect::<Result<Vec<_>, _>>()?;
        let dim = self.utterance.hidden();
        let data = traces.iter().flat_map(|t| t.representation.iter().copied()).collect();
        let reps = Tensor::new(vec![window.len(), dim], data)?;
        Ok((traces, reps))
    }

    pub fn loss(&self, window: &[Vec<u32>], target: usize) -> Result<T, NnError> {
        let (_, reps) = self.stack(window)?;
        cross_entropy(&self.context.predict(&reps)?, target)
    }

    pub fn loss_and_grad(&self, window: &[Vec<u32>], target: usize, grads: &mut Self) -> Result<T, NnError> {
        let (traces, reps) = self.stack(window)?;
        let (loss, d_reps) = self.context.loss_and_grad(&reps, target, &mut grads.context)?;
        for (i, trace) in traces.iter().enumerate() {
            self.utterance.backward_representation(trace, d_reps.row(i), &mut grads.utterance)?;
        }
        Ok(loss)
    }
}

impl<T: Real> ParamSet<T> for HierarchicalNet<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        self.utterance.visit_params(f);
        self.context.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        self.utterance.visit_params_mut(f);
        self.context.visit_params_mut(f);
    }
}
