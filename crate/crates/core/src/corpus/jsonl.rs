//! Normalized corpus interchange: one JSON object per utterance, plus plain
//! id lists describing the split.
//!
//! A prepared corpus directory contains `corpus.jsonl`, `train.txt`,
//! `validation.txt`, `test.txt` and `stats.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{read_id_list, split_corpus, SplitLists};
use super::{tag_set, tokenize, Conversation, CorpusError, CorpusSplit, LabeledUtterance, Speaker};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub conversation_id: String,
    pub position: usize,
    pub speaker: Speaker,
    #[serde(default)]
    pub raw_text: String,
    pub clean_text: String,
    pub tokens: Vec<String>,
    pub tag: String,
}

pub fn write_jsonl<W: Write>(conversations: &[Conversation], mut out: W) -> std::io::Result<()> {
    for utt in conversations.iter().flat_map(|c| &c.utterances) {
        let record = UtteranceRecord {
            conversation_id: utt.conversation_id.clone(),
            position: utt.position,
            speaker: utt.speaker,
            raw_text: utt.raw_text.clone(),
            clean_text: utt.clean_text.clone(),
            tokens: utt.tokens.clone(),
            tag: utt.tag.mnemonic().to_string(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Read conversations back, checking positions are contiguous and tokens match
/// the tokenization of `clean_text`.
pub fn read_jsonl<R: BufRead>(input: R, path: &Path) -> Result<Vec<Conversation>, CorpusError> {
    let err = |line: usize, message: String| CorpusError::Jsonl { path: path.to_path_buf(), line, message };
    let mut conversations: Vec<Conversation> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UtteranceRecord = serde_json::from_str(&line).map_err(|e| err(lineno, e.to_string()))?;
        let tag = tag_set().by_mnemonic(&rec.tag).ok_or_else(|| err(lineno, format!("unknown tag {:?}", rec.tag)))?;
        if tokenize(&rec.clean_text) != rec.tokens {
            return Err(err(lineno, "tokens do not match clean_text".into()));
        }
        if conversations.last().is_none_or(|c| c.id != rec.conversation_id) {
            conversations.push(Conversation { id: rec.conversation_id.clone(), utterances: Vec::new() });
        }
        let conv = conversations.last_mut().unwrap();
        if rec.position != conv.utterances.len() {
            return Err(err(lineno, format!("expected position {}, found {}", conv.utterances.len(), rec.position)));
        }
        conv.utterances.push(LabeledUtterance {
            conversation_id: rec.conversation_id,
            position: rec.position,
            speaker: rec.speaker,
            raw_text: rec.raw_text,
            clean_text: rec.clean_text,
            tokens: rec.tokens,
            tag,
        });
    }
    Ok(conversations)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

pub fn write_prepared(dir: &Path, split: &CorpusSplit) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let corpus_path = dir.join("corpus.jsonl");
    let file = File::create(&corpus_path).map_err(io_err(&corpus_path))?;
    let all: Vec<Conversation> = split.train.iter().chain(&split.validation).chain(&split.test).cloned().collect();
    write_jsonl(&all, BufWriter::new(file)).map_err(io_err(&corpus_path))?;
    for (name, convs) in [("train.txt", &split.train), ("validation.txt", &split.validation), ("test.txt", &split.test)]
    {
        let path = dir.join(name);
        let mut body = CorpusSplit::ids(convs).join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    let stats_path = dir.join("stats.json");
    let stats = serde_json::to_string_pretty(&split.stats()).expect("stats serialize");
    std::fs::write(&stats_path, stats + "\n").map_err(io_err(&stats_path))
}

pub fn read_prepared(dir: &Path) -> Result<CorpusSplit, CorpusError> {
    let corpus_path = dir.join("corpus.jsonl");
    let file = File::open(&corpus_path).map_err(io_err(&corpus_path))?;
    let all = read_jsonl(BufReader::new(file), &corpus_path)?;
    let train = read_id_list(&dir.join("train.txt"))?;
    let validation = read_id_list(&dir.join("validation.txt"))?;
    let test = read_id_list(&dir.join("test.txt"))?;
    let validation_count = validation.len();
    let mut train_all = train;
    train_all.extend(validation);
    split_corpus(&all, &SplitLists { train: train_all, test, validation_count })
}
