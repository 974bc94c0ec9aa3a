//! The 42-class dialogue-act tag set and the collapsing rules that map raw
//! SwDA `act_tag` strings onto it.

use std::collections::HashMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::NUM_TAGS;

const TAG_TABLE: &str = include_str!("../../data/tag_clusters.tsv");

/// Index of a dialogue-act class in `[0, 42)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(pub u8);

impl TagId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(index: usize) -> Option<TagId> {
        (index < NUM_TAGS).then_some(TagId(index as u8))
    }

    pub fn tag(self) -> &'static DialogueActTag {
        &tag_set().tags[self.index()]
    }

    pub fn mnemonic(self) -> &'static str {
        &self.tag().mnemonic
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueActTag {
    pub index: usize,
    pub mnemonic: String,
    pub display_name: String,
    /// Raw (already stripped) SwDA tags clustered into this class.
    #[serde(skip)]
    pub members: Vec<String>,
}

#[derive(Debug)]
pub struct TagSet {
    tags: Vec<DialogueActTag>,
    by_mnemonic: HashMap<String, TagId>,
    by_member: HashMap<String, TagId>,
}

impl TagSet {
    fn parse(table: &str) -> TagSet {
        let mut tags = Vec::with_capacity(NUM_TAGS);
        for line in table.lines() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 4, "bad tag table row: {line}");
            let index: usize = cols[0].parse().expect("tag index");
            assert_eq!(index, tags.len(), "tag table rows must be in index order");
            tags.push(DialogueActTag {
                index,
                mnemonic: cols[1].to_string(),
                display_name: cols[2].to_string(),
                members: cols[3].split(',').map(str::to_string).collect(),
            });
        }
        assert_eq!(tags.len(), NUM_TAGS, "tag table must list exactly {NUM_TAGS} classes");
        let mut by_mnemonic = HashMap::new();
        let mut by_member = HashMap::new();
        for tag in &tags {
            let id = TagId(tag.index as u8);
            assert!(by_mnemonic.insert(tag.mnemonic.clone(), id).is_none());
            for m in &tag.members {
                assert!(by_member.insert(m.clone(), id).is_none(), "duplicate member {m}");
            }
        }
        TagSet { tags, by_mnemonic, by_member }
    }

    pub fn tags(&self) -> &[DialogueActTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn by_mnemonic(&self, mnemonic: &str) -> Option<TagId> {
        self.by_mnemonic.get(mnemonic).copied()
    }

    pub fn mnemonics(&self) -> Vec<String> {
        self.tags.iter().map(|t| t.mnemonic.clone()).collect()
    }
}

pub fn tag_set() -> &'static TagSet {
    static SET: LazyLock<TagSet> = LazyLock::new(|| TagSet::parse(TAG_TABLE));
    &SET
}

/// Result of collapsing one raw `act_tag` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollapsedTag {
    Tag(TagId),
    /// `+`: the utterance continues an earlier segment of the same speaker.
    Continuation,
}

/// Collapse a raw SwDA `act_tag` (possibly composite, e.g. `sd^e`, `qy^d`,
/// `aa,sv`) onto the 42-class set. Only the first of several comma/semicolon
/// separated tags is used. Returns the stripped tag on failure.
pub fn collapse_act_tag(raw: &str) -> Result<CollapsedTag, String> {
    static SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*[,;]\s*").unwrap());
    static CARET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(.)\^.*").unwrap());
    static JUNK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[()@*]").unwrap());

    let first = SPLIT.split(raw.trim()).next().unwrap_or("");
    let stripped = match first {
        "qy^d" | "qw^d" | "b^m" | "nn^e" | "ny^e" => first.to_string(),
        _ => {
            let t = CARET.replace(first, "$1");
            JUNK.replace_all(&t, "").into_owned()
        }
    };
    if stripped == "+" {
        return Ok(CollapsedTag::Continuation);
    }
    tag_set().by_member.get(&stripped).map(|&id| CollapsedTag::Tag(id)).ok_or(stripped)
}
