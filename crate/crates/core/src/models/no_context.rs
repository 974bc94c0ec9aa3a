use rand::Rng;

use super::{ModelDims, ModelError, UtteranceNet};
use crate::corpus::{encode_utterance, Vocabulary};
use crate::nn::{NnError, ParamSet};
use crate::NUM_TAGS;

/// Utterance-level classifier: embedding, LSTM, softmax over the 42 tags.
#[derive(Debug, Clone, PartialEq)]
pub struct NoContextModel {
    vocab: Vocabulary,
    max_len: usize,
    net: UtteranceNet<f32>,
}

impl NoContextModel {
    pub fn new<R: Rng + ?Sized>(
        vocab: Vocabulary,
        max_len: usize,
        dims: ModelDims,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let net = UtteranceNet::new(vocab.len(), dims.embedding_dim, dims.hidden, NUM_TAGS, rng);
        Self::from_parts(vocab, max_len, net)
    }

    pub fn from_parts(vocab: Vocabulary, max_len: usize, net: UtteranceNet<f32>) -> Result<Self, ModelError> {
        net.validate()?;
        if max_len == 0 {
            return Err(ModelError::Invalid("max_len must be positive".into()));
        }
        if net.embedding.vocab_size() != vocab.len() {
            return Err(ModelError::Invalid(format!(
                "embedding has {} rows but the vocabulary has {} entries",
                net.embedding.vocab_size(),
                vocab.len()
            )));
        }
        if net.output.classes() != NUM_TAGS {
            return Err(ModelError::Invalid(format!(
                "output layer has {} classes, expected {NUM_TAGS}",
                net.output.classes()
            )));
        }
        Ok(NoContextModel { vocab, max_len, net })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn net(&self) -> &UtteranceNet<f32> {
        &self.net
    }

    pub fn hidden(&self) -> usize {
        self.net.hidden()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.net.embedding.dim(), self.net.hidden())
    }

    /// Token ids for this model's vocabulary and length.
    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<u32> {
        encode_utterance(&self.vocab, tokens, self.max_len)
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.len() != self.max_len {
            return Err(NnError::ShapeMismatch {
                context: "encoded utterance",
                expected: vec![self.max_len],
                found: vec![ids.len()],
            }
            .into());
        }
        Ok(())
    }

    /// The utterance representation: last hidden state of the word-level LSTM.
    pub fn encode_utterance_rep(&self, ids: &[u32]) -> Result<Vec<f32>, ModelError> {
        self.check_ids(ids)?;
        Ok(self.net.represent(ids)?.representation)
    }

    pub fn predict_no_context(&self, ids: &[u32]) -> Result<Vec<f32>, ModelError> {
        self.check_ids(ids)?;
        Ok(self.net.predict(ids)?)
    }

    pub fn parameter_checksum(&self) -> u32 {
        self.net.parameter_checksum()
    }

    pub fn model_id(&self) -> String {
        format!("no_context-{:08x}", self.parameter_checksum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PAD;
    use crate::nn::{dense_logits, lstm_step, softmax};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_vocab() -> Vocabulary {
        let tokens = ["<pad>", "<unk>", "yeah", ".", "i", "think", "so", "?"];
        Vocabulary::from_tokens(tokens.iter().map(|s| s.to_string()).collect(), 1).unwrap()
    }

    fn model() -> NoContextModel {
        NoContextModel::new(toy_vocab(), 6, ModelDims::default(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn all_pad_input_gives_zero_representation() {
        let rep = model().encode_utterance_rep(&[PAD; 6]).unwrap();
        assert_eq!(rep.len(), 64);
        assert!(rep.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fresh_model_is_near_uniform() {
        let m = model();
        for ids in [[0, 0, 0, 0, 2, 3], [4, 5, 6, 3, 1, 1], [7, 7, 7, 7, 7, 7]] {
            let p = m.predict_no_context(&ids).unwrap();
            assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&x| (x - 1.0 / 42.0).abs() < 0.05));
        }
    }

    /// Reference loop: embed, step the LSTM by hand, project, softmax.
    #[test]
    fn matches_reference_forward() {
        let m = model();
        let ids = [0u32, 0, 4, 5, 6, 3];
        let net = m.net();
        let mut h = vec![0f32; 64];
        let mut c = vec![0f32; 64];
        for &id in &ids {
            let x = net.embedding.weights.row(id as usize);
            let (h2, c2, _) = lstm_step(x, &h, &c, &net.encoder).unwrap();
            h = h2;
            c = c2;
        }
        let expected = softmax(&dense_logits(&h, &net.output).unwrap());
        assert_eq!(m.encode_utterance_rep(&ids).unwrap(), h);
        assert_eq!(m.predict_no_context(&ids).unwrap(), expected);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(matches!(model().predict_no_context(&[2, 3]), Err(ModelError::Nn(NnError::ShapeMismatch { .. }))));
        assert!(model().predict_no_context(&[0, 0, 0, 0, 0, 99]).is_err());
    }

    #[test]
    fn vocabulary_size_must_match() {
        let net = UtteranceNet::new(3, 50, 64, NUM_TAGS, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(NoContextModel::from_parts(toy_vocab(), 6, net), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn deterministic_and_identified() {
        let a = model();
        let b = model();
        assert_eq!(a, b);
        assert_eq!(a.model_id(), b.model_id());
        assert!(a.model_id().starts_with("no_context-"));
        let ids = [0, 0, 0, 2, 3, 3];
        assert_eq!(a.encode_utterance_rep(&ids).unwrap(), a.encode_utterance_rep(&ids).unwrap());
    }
}
