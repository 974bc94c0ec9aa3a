use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Conversation, CorpusError};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token/index bijection. Index 0 is PAD and index 1 is UNK; the remaining
/// tokens are ordered by descending training frequency, ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, u32>,
    min_count: usize,
}

impl Vocabulary {
    /// Rebuild a vocabulary from its ordered token list (as stored in model files).
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self, CorpusError> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(CorpusError::BadVocabulary("first two entries must be <pad>, <unk>".into()));
        }
        let mut token_to_index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_index.insert(t.clone(), i as u32).is_some() {
                return Err(CorpusError::BadVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { index_to_token: tokens, token_to_index, min_count })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.index_to_token.get(index as usize).map(String::as_str)
    }

    /// Index for `token`, falling back to UNK.
    pub fn lookup(&self, token: &str) -> u32 {
        self.index_of(token).filter(|&i| i > UNK).unwrap_or(UNK)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    min_count: usize,
    tokens: Vec<String>,
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VocabularyRepr { min_count: self.min_count, tokens: self.index_to_token.clone() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = VocabularyRepr::deserialize(deserializer)?;
        Vocabulary::from_tokens(repr.tokens, repr.min_count).map_err(serde::de::Error::custom)
    }
}

pub fn build_vocabulary(train_conversations: &[Conversation], min_count: usize) -> Result<Vocabulary, CorpusError> {
    if min_count == 0 {
        return Err(CorpusError::InvalidMinCount);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for token in train_conversations.iter().flat_map(|c| &c.utterances).flat_map(|u| &u.tokens) {
        *counts.entry(token.as_str()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(CorpusError::EmptyTrainingSet);
    }
    let mut kept: Vec<(&str, usize)> =
        counts.into_iter().filter(|&(t, n)| n >= min_count && t != PAD_TOKEN && t != UNK_TOKEN).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens, min_count)
}

/// Map tokens to a fixed-length id sequence: unknown tokens become UNK, long
/// sequences keep their last `max_len` tokens, short ones are left-padded.
pub fn encode_utterance(vocab: &Vocabulary, tokens: &[String], max_len: usize) -> Vec<u32> {
    let tail = &tokens[tokens.len().saturating_sub(max_len)..];
    let mut ids = vec![PAD; max_len - tail.len()];
    ids.extend(tail.iter().map(|t| vocab.lookup(t)));
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledUtterance, Speaker, TagId};
    use proptest::prelude::*;

    fn conv(tokens: &[&str]) -> Conversation {
        Conversation {
            id: "sw1".into(),
            utterances: vec![LabeledUtterance {
                conversation_id: "sw1".into(),
                position: 0,
                speaker: Speaker::A,
                raw_text: String::new(),
                clean_text: tokens.join(" "),
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                tag: TagId(0),
            }],
        }
    }

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn frequency_ordering() {
        let vocab = build_vocabulary(&[conv(&["a", "b", "a", "a"])], 1).unwrap();
        assert_eq!(vocab.tokens(), &strings(&["<pad>", "<unk>", "a", "b"])[..]);
        assert_eq!(vocab.index_of("a"), Some(2));
        assert_eq!(vocab.index_of("b"), Some(3));
    }

    #[test]
    fn threshold_excludes_rare_tokens() {
        let vocab = build_vocabulary(&[conv(&["a", "b", "a", "a"])], 2).unwrap();
        assert_eq!(vocab.len(), 3);
        assert_eq!(vocab.lookup("b"), UNK);
        assert_eq!(encode_utterance(&vocab, &strings(&["b", "a"]), 2), vec![UNK, 2]);
    }

    #[test]
    fn lexicographic_tie_break() {
        let vocab = build_vocabulary(&[conv(&["z", "y", "x", "y", "z"])], 1).unwrap();
        assert_eq!(&vocab.tokens()[2..], &strings(&["y", "z", "x"])[..]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(build_vocabulary(&[conv(&[])], 1), Err(CorpusError::EmptyTrainingSet)));
        assert!(matches!(build_vocabulary(&[], 1), Err(CorpusError::EmptyTrainingSet)));
        assert!(matches!(build_vocabulary(&[conv(&["a"])], 0), Err(CorpusError::InvalidMinCount)));
    }

    #[test]
    fn padding_and_truncation() {
        let mut tokens = strings(&["<pad>", "<unk>", "a", "b", "c"]);
        tokens.extend(strings(&["yeah", "."]));
        let vocab = Vocabulary::from_tokens(tokens, 1).unwrap();
        assert_eq!(encode_utterance(&vocab, &strings(&["yeah", "."]), 4), vec![0, 0, 5, 6]);
        assert_eq!(encode_utterance(&vocab, &[], 3), vec![0, 0, 0]);
        let long = strings(&["a", "b", "c", "a", "b", "c", "yeah", ".", "a", "b"]);
        assert_eq!(encode_utterance(&vocab, &long, 4), vec![5, 6, 2, 3]);
        // reserved strings typed by a user are not special
        assert_eq!(encode_utterance(&vocab, &strings(&["<pad>"]), 1), vec![UNK]);
    }

    #[test]
    fn serde_round_trip() {
        let vocab = build_vocabulary(&[conv(&["a", "b", "a"])], 1).unwrap();
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"min_count":1,"tokens":["a"]}"#).is_err());
    }

    proptest! {
        #[test]
        fn encoding_shape(tokens in proptest::collection::vec("[a-d]{1,2}", 0..40), max_len in 1usize..30) {
            let vocab = build_vocabulary(&[conv(&["a", "b", "c", "aa", "a"])], 1).unwrap();
            let ids = encode_utterance(&vocab, &tokens, max_len);
            prop_assert_eq!(ids.len(), max_len);
            prop_assert!(ids.iter().all(|&i| (i as usize) < vocab.len()));
        }

        #[test]
        fn deterministic_build(tokens in proptest::collection::vec("[a-f]", 1..60)) {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let a = build_vocabulary(&[conv(&refs)], 1).unwrap();
            let b = build_vocabulary(&[conv(&refs)], 1).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
