use std::sync::Arc;

use rand::Rng;

use super::{ContextNet, ModelError, NoContextModel};
use crate::nn::{ParamSet, Tensor};
use crate::NUM_TAGS;

/// Hierarchical classifier. Each utterance of a window `u_{t-n} .. u_t` is
/// encoded by the frozen [`NoContextModel`]; the representations run through
/// a second LSTM whose last state is classified by a separate output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    encoder: Arc<NoContextModel>,
    context_size: usize,
    net: ContextNet<f32>,
}

impl ContextModel {
    pub fn new<R: Rng + ?Sized>(
        encoder: Arc<NoContextModel>,
        context_size: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let net = ContextNet::new(encoder.hidden(), hidden, NUM_TAGS, rng);
        Self::from_parts(encoder, context_size, net)
    }

    pub fn from_parts(
        encoder: Arc<NoContextModel>,
        context_size: usize,
        net: ContextNet<f32>,
    ) -> Result<Self, ModelError> {
        net.validate()?;
        if net.lstm.input_dim() != encoder.hidden() {
            return Err(ModelError::Invalid(format!(
                "context LSTM takes {}-d input but the encoder produces {}-d representations",
                net.lstm.input_dim(),
                encoder.hidden()
            )));
        }
        if net.output.classes() != NUM_TAGS {
            return Err(ModelError::Invalid(format!(
                "output layer has {} classes, expected {NUM_TAGS}",
                net.output.classes()
            )));
        }
        Ok(ContextModel { encoder, context_size, net })
    }

    pub fn encoder(&self) -> &Arc<NoContextModel> {
        &self.encoder
    }

    /// Number of preceding utterances `n`; windows hold `n + 1` utterances.
    pub fn context_size(&self) -> usize {
        self.context_size
    }

    pub fn window_len(&self) -> usize {
        self.context_size + 1
    }

    pub fn net(&self) -> &ContextNet<f32> {
        &self.net
    }

    fn check_window(&self, found: usize) -> Result<(), ModelError> {
        if found != self.window_len() {
            return Err(ModelError::WindowLength { expected: self.window_len(), found });
        }
        Ok(())
    }

    /// Distribution for the last utterance of `window` (oldest first). The
    /// window must hold exactly `n + 1` encoded utterances; nothing is padded.
    pub fn predict_with_context(&self, window: &[Vec<u32>]) -> Result<Vec<f32>, ModelError> {
        self.check_window(window.len())?;
        let reps = window.iter().map(|ids| self.encoder.encode_utterance_rep(ids)).collect::<Result<Vec<_>, _>>()?;
        self.predict_from_representations(&reps)
    }

    /// Same as [`Self::predict_with_context`] for precomputed representations.
    pub fn predict_from_representations(&self, reps: &[Vec<f32>]) -> Result<Vec<f32>, ModelError> {
        self.check_window(reps.len())?;
        let stacked = stack_representations(reps, self.net.lstm.input_dim())?;
        Ok(self.net.predict(&stacked)?)
    }

    pub fn parameter_checksum(&self) -> u32 {
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(&self.encoder.parameter_checksum().to_le_bytes());
        hasher.update(&(self.context_size as u64).to_le_bytes());
        hasher.update(&self.net.parameter_checksum().to_le_bytes());
        hasher.finalize()
    }

    pub fn model_id(&self) -> String {
        format!("context-n{}-{:08x}", self.context_size, self.parameter_checksum())
    }
}

pub(crate) fn stack_representations(reps: &[Vec<f32>], dim: usize) -> Result<Tensor<f32>, ModelError> {
    let mut data = Vec::with_capacity(reps.len() * dim);
    for rep in reps {
        if rep.len() != dim {
            return Err(ModelError::Invalid(format!("representation has {} entries, expected {dim}", rep.len())));
        }
        data.extend_from_slice(rep);
    }
    Ok(Tensor::new(vec![reps.len(), dim], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Vocabulary, PAD};
    use crate::models::ModelDims;
    use crate::nn::{dense_logits, lstm_step, softmax};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder() -> Arc<NoContextModel> {
        let tokens = ["<pad>", "<unk>", "yeah", ".", "do", "you", "?"];
        let vocab = Vocabulary::from_tokens(tokens.iter().map(|s| s.to_string()).collect(), 1).unwrap();
        Arc::new(NoContextModel::new(vocab, 5, ModelDims::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap())
    }

    fn model(n: usize) -> ContextModel {
        ContextModel::new(encoder(), n, 64, &mut ChaCha8Rng::seed_from_u64(8)).unwrap()
    }

    #[test]
    fn window_length_is_enforced() {
        let m = model(2);
        let u = vec![0, 0, 0, 2, 3];
        assert!(matches!(
            m.predict_with_context(&[u.clone(), u.clone()]),
            Err(ModelError::WindowLength { expected: 3, found: 2 })
        ));
        let p = m.predict_with_context(&[u.clone(), u.clone(), u]).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    /// Reference composition: encode each utterance, step the context LSTM by
    /// hand, project, softmax.
    #[test]
    fn matches_composed_reference() {
        let m = model(2);
        let window = vec![vec![0, 4, 5, 2, 6], vec![0, 0, 0, 2, 3], vec![0, 0, 0, 2, 3]];
        let mut h = vec![0f32; 64];
        let mut c = vec![0f32; 64];
        for ids in &window {
            let rep = m.encoder().encode_utterance_rep(ids).unwrap();
            let (h2, c2, _) = lstm_step(&rep, &h, &c, &m.net().lstm).unwrap();
            h = h2;
            c = c2;
        }
        let expected = softmax(&dense_logits(&h, &m.net().output).unwrap());
        assert_eq!(m.predict_with_context(&window).unwrap(), expected);
    }

    /// With n = 1 and an all-PAD context utterance the first step sees a zero
    /// representation.
    #[test]
    fn pad_context_is_zero_representation() {
        let m = model(1);
        let current = vec![0, 0, 4, 5, 6];
        let rep = m.encoder().encode_utterance_rep(&current).unwrap();
        let a = m.predict_with_context(&[vec![PAD; 5], current]).unwrap();
        let b = m.predict_from_representations(&[vec![0.0; 64], rep]).unwrap();
        assert_eq!(a, b);
    }

    /// n = 0 reduces to one context-LSTM step over a single representation.
    #[test]
    fn degenerate_window_is_one_step() {
        let m = model(0);
        let ids = vec![0, 0, 2, 3, 3];
        let rep = m.encoder().encode_utterance_rep(&ids).unwrap();
        let (h, _, _) = lstm_step(&rep, &[0.0; 64], &[0.0; 64], &m.net().lstm).unwrap();
        let expected = softmax(&dense_logits(&h, &m.net().output).unwrap());
        assert_eq!(m.predict_with_context(&[ids]).unwrap(), expected);
    }

    #[test]
    fn encoder_width_must_match() {
        let net = ContextNet::new(32, 64, NUM_TAGS, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(ContextModel::from_parts(encoder(), 2, net), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn ids_depend_on_context_size() {
        assert_ne!(model(1).model_id(), model(2).model_id());
        assert!(model(2).model_id().starts_with("context-n2-"));
    }
}
