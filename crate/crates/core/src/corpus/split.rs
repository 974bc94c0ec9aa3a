use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use super::{Conversation, CorpusError, TagId};
use crate::NUM_TAGS;

/// Conversations held out from the end of the training list for early stopping.
pub const DEFAULT_VALIDATION_CONVERSATIONS: usize = 19;

/// Conversation id lists defining a split. The validation set is the last
/// `validation_count` ids of `train` (in list order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation_count: usize,
}

impl SplitLists {
    /// Train on every corpus conversation (in corpus order) that is neither in
    /// `test` nor in `excluded`.
    pub fn remaining(all: &[Conversation], test: Vec<String>, excluded: &[String], validation_count: usize) -> Self {
        let skip: HashSet<&str> = test.iter().chain(excluded).map(String::as_str).collect();
        let train = all.iter().map(|c| c.id.clone()).filter(|id| !skip.contains(id.as_str())).collect();
        SplitLists { train, test, validation_count }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Conversation>,
    pub validation: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub train_conversations: usize,
    pub train_utterances: usize,
    pub validation_conversations: usize,
    pub validation_utterances: usize,
    pub test_conversations: usize,
    pub test_utterances: usize,
}

impl SplitStats {
    /// Training-side counts before the validation carve-out.
    pub fn full_train(&self) -> (usize, usize) {
        (self.train_conversations + self.validation_conversations, self.train_utterances + self.validation_utterances)
    }
}

fn utterances(convs: &[Conversation]) -> usize {
    convs.iter().map(Conversation::len).sum()
}

impl CorpusSplit {
    pub fn stats(&self) -> SplitStats {
        SplitStats {
            train_conversations: self.train.len(),
            train_utterances: utterances(&self.train),
            validation_conversations: self.validation.len(),
            validation_utterances: utterances(&self.validation),
            test_conversations: self.test.len(),
            test_utterances: utterances(&self.test),
        }
    }

    pub fn ids(convs: &[Conversation]) -> Vec<String> {
        convs.iter().map(|c| c.id.clone()).collect()
    }
}

pub fn split_corpus(all_conversations: &[Conversation], lists: &SplitLists) -> Result<CorpusSplit, CorpusError> {
    let mut seen = HashSet::new();
    let mut overlapping = BTreeSet::new();
    for id in lists.train.iter().chain(&lists.test) {
        if !seen.insert(id.as_str()) {
            overlapping.insert(id.clone());
        }
    }
    if !overlapping.is_empty() {
        return Err(CorpusError::OverlappingIds(overlapping.into_iter().collect()));
    }
    let by_id: HashMap<&str, &Conversation> = all_conversations.iter().map(|c| (c.id.as_str(), c)).collect();
    let unknown: Vec<String> =
        lists.train.iter().chain(&lists.test).filter(|id| !by_id.contains_key(id.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(CorpusError::UnknownIds(unknown));
    }
    let pick = |ids: &[String]| -> Vec<Conversation> { ids.iter().map(|id| by_id[id.as_str()].clone()).collect() };
    let carve = lists.train.len() - lists.validation_count.min(lists.train.len());
    Ok(CorpusSplit {
        train: pick(&lists.train[..carve]),
        validation: pick(&lists.train[carve..]),
        test: pick(&lists.test),
    })
}

const CANONICAL_TEST_LIST: &str = include_str!("../../data/splits/test.txt");

/// The 19 held-out SwDA test conversations, bundled with the crate.
pub fn canonical_test_ids() -> Vec<String> {
    parse_id_list(CANONICAL_TEST_LIST)
}

fn parse_id_list(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect()
}

/// One conversation id per line; blank lines and `#` comments are ignored.
pub fn read_id_list(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_id_list(&text))
}

/// Accuracy on the test split of always predicting the most frequent training
/// tag (train plus validation; ties go to the lowest tag index).
pub fn most_common_class_baseline(split: &CorpusSplit) -> Result<f64, CorpusError> {
    let mut counts = [0usize; NUM_TAGS];
    for utt in split.train.iter().chain(&split.validation).flat_map(|c| &c.utterances) {
        counts[utt.tag.index()] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(CorpusError::EmptySplit("train"));
    }
    let test_total = utterances(&split.test);
    if test_total == 0 {
        return Err(CorpusError::EmptySplit("test"));
    }
    let mode = majority_tag(&counts);
    let hits = split.test.iter().flat_map(|c| &c.utterances).filter(|u| u.tag == mode).count();
    Ok(hits as f64 / test_total as f64)
}

pub(crate) fn majority_tag(counts: &[usize; NUM_TAGS]) -> TagId {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    TagId(best as u8)
}
