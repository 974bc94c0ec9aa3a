//! `.dwm` model files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DWMF"
//! 4       4     format version, u32 LE
//! 8       8     payload length P, u64 LE
//! 16      P     payload:
//!                 u64 LE  header length J
//!                 J bytes UTF-8 JSON header (kind, tags, vocabulary, dims, tensor table)
//!                 tensors in tensor-table order, f32 LE, row-major
//! 16+P    4     CRC-32 of the payload, u32 LE
//! ```
//!
//! Context model files embed the full encoder so they load standalone.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ContextModel, ContextNet, ModelError, NoContextModel, UtteranceNet};
use crate::corpus::{tag_set, Vocabulary};
use crate::nn::{DenseParams, Embedding, LstmParams, ParamSet, Tensor};

pub const MAGIC: [u8; 4] = *b"DWMF";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NoContext,
    Context,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::NoContext => "no-context",
            ModelKind::Context => "context",
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContextHeader {
    context_size: usize,
    hidden: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileHeader {
    kind: ModelKind,
    tags: Vec<String>,
    vocabulary: Vocabulary,
    max_len: usize,
    embedding_dim: usize,
    hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    context: Option<ContextHeader>,
    tensors: Vec<TensorEntry>,
}

/// A model of either kind, as read from disk.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    NoContext(NoContextModel),
    Context(ContextModel),
}

impl LoadedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            LoadedModel::NoContext(_) => ModelKind::NoContext,
            LoadedModel::Context(_) => ModelKind::Context,
        }
    }
}

fn encode(header: &FileHeader, tensors: &[&Tensor<f32>]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let tensor_bytes: usize = tensors.iter().map(|t| t.len() * 4).sum();
    let mut payload = Vec::with_capacity(8 + json.len() + tensor_bytes);
    payload.extend_from_slice(&(json.len() as u64).to_le_bytes());
    payload.extend_from_slice(&json);
    for t in tensors {
        for x in t.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(PREAMBLE + payload.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

fn collect<'a, P: ParamSet<f32>>(params: &'a P, entries: &mut Vec<TensorEntry>, tensors: &mut Vec<&'a Tensor<f32>>) {
    params.visit_params(&mut |name, t| {
        entries.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec() });
        tensors.push(t);
    });
}

fn encoder_header(model: &NoContextModel, kind: ModelKind) -> FileHeader {
    let (embedding_dim, hidden) = model.dims();
    FileHeader {
        kind,
        tags: tag_set().mnemonics(),
        vocabulary: model.vocab().clone(),
        max_len: model.max_len(),
        embedding_dim,
        hidden,
        context: None,
        tensors: Vec::new(),
    }
}

pub fn encode_no_context(model: &NoContextModel) -> Vec<u8> {
    let mut header = encoder_header(model, ModelKind::NoContext);
    let mut tensors = Vec::new();
    collect(model.net(), &mut header.tensors, &mut tensors);
    encode(&header, &tensors)
}

pub fn encode_context(model: &ContextModel) -> Vec<u8> {
    let mut header = encoder_header(model.encoder(), ModelKind::Context);
    header.context = Some(ContextHeader { context_size: model.context_size(), hidden: model.net().lstm.hidden() });
    let mut tensors = Vec::new();
    collect(model.encoder().net(), &mut header.tensors, &mut tensors);
    collect(model.net(), &mut header.tensors, &mut tensors);
    encode(&header, &tensors)
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Verify framing and checksum, returning the header and named tensors.
fn decode_raw(bytes: &[u8]) -> Result<(FileHeader, BTreeMap<String, Tensor<f32>>), ModelError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes.len() < PREAMBLE {
        return Err(ModelError::Truncated { expected: PREAMBLE as u64, found: bytes.len() as u64 });
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch { found: version, supported: FORMAT_VERSION });
    }
    let payload_len = read_u64(bytes, 8);
    let expected = (PREAMBLE as u64).saturating_add(payload_len).saturating_add(4);
    if bytes.len() as u64 != expected {
        if (bytes.len() as u64) < expected {
            return Err(ModelError::Truncated { expected, found: bytes.len() as u64 });
        }
        return Err(ModelError::Format(format!("{} trailing bytes after checksum", bytes.len() as u64 - expected)));
    }
    let payload = &bytes[PREAMBLE..bytes.len() - 4];
    let stored = read_u32(bytes, bytes.len() - 4);
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(ModelError::Checksum { stored, computed });
    }

    if payload.len() < 8 {
        return Err(ModelError::Format("payload too short for header length".into()));
    }
    let json_len =
        usize::try_from(read_u64(payload, 0)).map_err(|_| ModelError::Format("header length overflow".into()))?;
    let json_end = 8usize.checked_add(json_len).filter(|&e| e <= payload.len());
    let json_end = json_end.ok_or_else(|| ModelError::Format("header length exceeds payload".into()))?;
    let header: FileHeader =
        serde_json::from_slice(&payload[8..json_end]).map_err(|e| ModelError::Format(format!("header JSON: {e}")))?;

    let mut offset = json_end;
    let mut tensors = BTreeMap::new();
    for entry in &header.tensors {
        let count = entry
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c > 0)
            .ok_or_else(|| ModelError::Format(format!("bad shape {:?} for {}", entry.shape, entry.name)))?;
        let end = count.checked_mul(4).and_then(|n| n.checked_add(offset)).filter(|&e| e <= payload.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("tensor {} runs past the payload", entry.name)))?;
        let data =
            payload[offset..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        offset = end;
        let tensor = Tensor::new(entry.shape.clone(), data)?;
        if tensors.insert(entry.name.clone(), tensor).is_some() {
            return Err(ModelError::Format(format!("duplicate tensor {}", entry.name)));
        }
    }
    if offset != payload.len() {
        return Err(ModelError::Format(format!("{} unread payload bytes", payload.len() - offset)));
    }
    if header.tags != tag_set().mnemonics() {
        return Err(ModelError::Format("tag list differs from the 42-tag set of this build".into()));
    }
    Ok((header, tensors))
}

fn take(tensors: &mut BTreeMap<String, Tensor<f32>>, name: &str) -> Result<Tensor<f32>, ModelError> {
    tensors.remove(name).ok_or_else(|| ModelError::Format(format!("missing tensor {name}")))
}

fn take_lstm(tensors: &mut BTreeMap<String, Tensor<f32>>, prefix: &str) -> Result<LstmParams<f32>, ModelError> {
    Ok(LstmParams::from_tensors(
        take(tensors, &format!("{prefix}.input_weights"))?,
        take(tensors, &format!("{prefix}.recurrent_weights"))?,
        take(tensors, &format!("{prefix}.bias"))?,
    )?)
}

fn take_dense(tensors: &mut BTreeMap<String, Tensor<f32>>, prefix: &str) -> Result<DenseParams<f32>, ModelError> {
    Ok(DenseParams::from_tensors(
        take(tensors, &format!("{prefix}.weights"))?,
        take(tensors, &format!("{prefix}.bias"))?,
    )?)
}

fn build_encoder(
    header: &FileHeader,
    tensors: &mut BTreeMap<String, Tensor<f32>>,
) -> Result<NoContextModel, ModelError> {
    let net = UtteranceNet {
        embedding: Embedding::from_weights(take(tensors, "embedding")?)?,
        encoder: take_lstm(tensors, "encoder")?,
        output: take_dense(tensors, "output")?,
    };
    if net.embedding.dim() != header.embedding_dim || net.hidden() != header.hidden {
        return Err(ModelError::Format("tensor shapes disagree with declared dimensions".into()));
    }
    NoContextModel::from_parts(header.vocabulary.clone(), header.max_len, net)
}

pub fn decode_model(bytes: &[u8]) -> Result<LoadedModel, ModelError> {
    let (header, mut tensors) = decode_raw(bytes)?;
    let encoder = build_encoder(&header, &mut tensors)?;
    let model = match (&header.kind, &header.context) {
        (ModelKind::NoContext, None) => LoadedModel::NoContext(encoder),
        (ModelKind::Context, Some(ctx)) => {
            let net = ContextNet {
                lstm: take_lstm(&mut tensors, "context")?,
                output: take_dense(&mut tensors, "context_output")?,
            };
            if net.lstm.hidden() != ctx.hidden {
                return Err(ModelError::Format("context tensor shapes disagree with declared dimensions".into()));
            }
            LoadedModel::Context(ContextModel::from_parts(Arc::new(encoder), ctx.context_size, net)?)
        }
        _ => return Err(ModelError::Format("context block does not match model kind".into())),
    };
    if let Some(name) = tensors.keys().next() {
        return Err(ModelError::Format(format!("unexpected tensor {name}")));
    }
    Ok(model)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    std::fs::write(path, bytes).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })
}

pub fn save_no_context(model: &NoContextModel, path: &Path) -> Result<(), ModelError> {
    write_file(path, &encode_no_context(model))
}

pub fn save_context(model: &ContextModel, path: &Path) -> Result<(), ModelError> {
    write_file(path, &encode_context(model))
}

pub fn load_model(path: &Path) -> Result<LoadedModel, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    decode_model(&bytes)
}

pub fn load_no_context(path: &Path) -> Result<NoContextModel, ModelError> {
    match load_model(path)? {
        LoadedModel::NoContext(m) => Ok(m),
        other => Err(ModelError::WrongKind { expected: ModelKind::NoContext, found: other.kind() }),
    }
}

pub fn load_context(path: &Path) -> Result<ContextModel, ModelError> {
    match load_model(path)? {
        LoadedModel::Context(m) => Ok(m),
        other => Err(ModelError::WrongKind { expected: ModelKind::Context, found: other.kind() }),
    }
}
