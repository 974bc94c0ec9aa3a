//! Switchboard Dialogue Act corpus ingestion: loading, cleaning, tokenization,
//! vocabulary construction, encoding and train/validation/test splitting.

mod clean;
mod jsonl;
mod split;
mod swda;
mod tags;
mod vocab;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::{clean_utterance, tokenize};
pub use jsonl::{read_jsonl, read_prepared, write_jsonl, write_prepared, UtteranceRecord};
pub use split::{
    canonical_test_ids, most_common_class_baseline, read_id_list, split_corpus, CorpusSplit, SplitLists, SplitStats,
    DEFAULT_VALIDATION_CONVERSATIONS,
};
pub use swda::load_swda;
pub use tags::{collapse_act_tag, tag_set, CollapsedTag, DialogueActTag, TagId, TagSet};
pub use vocab::{build_vocabulary, encode_utterance, Vocabulary, PAD, UNK};

/// Utterances are encoded to this many token ids.
pub const DEFAULT_MAX_LEN: usize = 25;
/// Tokens seen fewer times than this in training map to UNK.
pub const DEFAULT_MIN_COUNT: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus directory {0} does not exist")]
    MissingDirectory(PathBuf),
    #[error("no conversations found under {0}")]
    NoConversations(PathBuf),
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow { file: PathBuf, line: u64, reason: String },
    #[error("{file}:{line}: unknown act tag {tag:?} after collapsing")]
    UnknownTag { file: PathBuf, line: u64, tag: String },
    #[error("conversation {conversation}: continuation at position {position} has no preceding tag")]
    UnresolvedContinuation { conversation: String, position: usize },
    #[error("vocabulary min_count must be at least 1")]
    InvalidMinCount,
    #[error("training split contains no tokens")]
    EmptyTrainingSet,
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error("conversation ids appear in more than one split list: {0:?}")]
    OverlappingIds(Vec<String>),
    #[error("conversation ids not present in the corpus: {0:?}")]
    UnknownIds(Vec<String>),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{path}:{line}: {message}")]
    Jsonl { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    A = 0,
    B = 1,
}

impl Speaker {
    /// Positional speaker for the `index`-th (0-based) line of an alternating transcript.
    pub fn alternating(index: usize) -> Speaker {
        if index.is_multiple_of(2) {
            Speaker::A
        } else {
            Speaker::B
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledUtterance {
    pub conversation_id: String,
    pub position: usize,
    pub speaker: Speaker,
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
    pub tag: TagId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<LabeledUtterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}
