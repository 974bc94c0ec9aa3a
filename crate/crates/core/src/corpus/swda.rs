//! Reader for the public SwDA CSV release (one `*.utt.csv` per conversation,
//! with at least the `conversation_no`, `act_tag`, `caller` and `text` columns).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::clean::{clean_utterance, tokenize};
use super::tags::{collapse_act_tag, CollapsedTag, TagId};
use super::{Conversation, CorpusError, LabeledUtterance, Speaker};

pub fn load_swda(directory_path: &Path) -> Result<Vec<Conversation>, CorpusError> {
    if !directory_path.is_dir() {
        return Err(CorpusError::MissingDirectory(directory_path.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = WalkDir::new(directory_path)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    files.sort();

    let mut conversations: Vec<Conversation> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for file in &files {
        for (id, utterances) in parse_rows(file)? {
            let slot = *by_id.entry(id.clone()).or_insert_with(|| {
                conversations.push(Conversation { id, utterances: Vec::new() });
                conversations.len() - 1
            });
            conversations[slot].utterances.extend(utterances);
        }
    }
    if conversations.is_empty() {
        return Err(CorpusError::NoConversations(directory_path.to_path_buf()));
    }
    for conv in &mut conversations {
        resolve_continuations(conv)?;
    }
    Ok(conversations)
}

/// Placeholder tag for `+` rows until [`resolve_continuations`] runs.
const CONTINUATION: TagId = TagId(u8::MAX);

type FileConversations = Vec<(String, Vec<LabeledUtterance>)>;

fn parse_rows(file: &Path) -> Result<FileConversations, CorpusError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(file).map_err(|e| csv_error(file, &e))?;
    let headers = reader.headers().map_err(|e| csv_error(file, &e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| CorpusError::MalformedRow {
            file: file.to_path_buf(),
            line: 1,
            reason: format!("missing column {name:?}"),
        })
    };
    let (conv_col, tag_col, caller_col, text_col) =
        (column("conversation_no")?, column("act_tag")?, column("caller")?, column("text")?);

    let mut out: FileConversations = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(file, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |reason: String| CorpusError::MalformedRow { file: file.to_path_buf(), line, reason };
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let conv_no = field(conv_col);
        if conv_no.is_empty() || !conv_no.chars().all(|c| c.is_ascii_digit()) {
            return Err(malformed(format!("bad conversation_no {conv_no:?}")));
        }
        let id = format!("sw{conv_no}");
        let speaker = match field(caller_col) {
            "A" => Speaker::A,
            "B" => Speaker::B,
            other => return Err(malformed(format!("bad caller {other:?}"))),
        };
        let raw_text = record.get(text_col).unwrap_or("").to_string();
        let clean_text = clean_utterance(&raw_text);
        let tokens = tokenize(&clean_text);

        if out.last().is_none_or(|(last, _)| *last != id) {
            out.push((id.clone(), Vec::new()));
        }
        let rows = &mut out.last_mut().unwrap().1;
        let tag = match collapse_act_tag(field(tag_col)) {
            Ok(CollapsedTag::Tag(tag)) => tag,
            Ok(CollapsedTag::Continuation) => CONTINUATION,
            Err(tag) => return Err(CorpusError::UnknownTag { file: file.to_path_buf(), line, tag }),
        };
        rows.push(LabeledUtterance { conversation_id: id, position: 0, speaker, raw_text, clean_text, tokens, tag });
    }
    Ok(out)
}

/// Assign positions and give each `+` continuation the tag of the same
/// speaker's previous utterance (or of the previous utterance if that speaker
/// has none yet).
fn resolve_continuations(conv: &mut Conversation) -> Result<(), CorpusError> {
    let mut last_by_speaker: [Option<TagId>; 2] = [None, None];
    let mut last_any: Option<TagId> = None;
    for (position, utt) in conv.utterances.iter_mut().enumerate() {
        utt.position = position;
        if utt.tag == CONTINUATION {
            utt.tag = last_by_speaker[utt.speaker as usize]
                .or(last_any)
                .ok_or_else(|| CorpusError::UnresolvedContinuation { conversation: conv.id.clone(), position })?;
        }
        last_by_speaker[utt.speaker as usize] = Some(utt.tag);
        last_any = Some(utt.tag);
    }
    Ok(())
}

fn csv_error(file: &Path, err: &csv::Error) -> CorpusError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    CorpusError::MalformedRow { file: file.to_path_buf(), line, reason: err.to_string() }
}
