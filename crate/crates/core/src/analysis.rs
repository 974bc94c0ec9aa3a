//! Conversation analysis: raw lines in, per-utterance predictions from both
//! models out. Pure over immutable models, so it can be shared freely across
//! threads; nothing is logged or persisted.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{clean_utterance, tag_set, tokenize, Speaker, TagId};
use crate::models::{ContextModel, ModelError, NoContextModel};
use crate::training::argmax;
use crate::NUM_TAGS;

pub const API_VERSION: &str = "1";
pub const DEFAULT_TOP_K: usize = 3;

fn default_api_version() -> String {
    API_VERSION.to_string()
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    #[serde(default = "default_api_version")]
    pub api_version: String,
    pub utterances: Vec<String>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl AnalysisRequest {
    pub fn new(utterances: Vec<String>) -> Self {
        AnalysisRequest { api_version: default_api_version(), utterances, top_k: DEFAULT_TOP_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPrediction {
    pub tag: String,
    pub name: String,
    pub confidence: f32,
}

/// Serialized as the bare string `"NotEnoughContext"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextMarker {
    NotEnoughContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextPrediction {
    Predictions(Vec<TagPrediction>),
    Marker(ContextMarker),
}

impl ContextPrediction {
    pub fn predictions(&self) -> Option<&[TagPrediction]> {
        match self {
            ContextPrediction::Predictions(p) => Some(p),
            ContextPrediction::Marker(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    /// `utt1`, `utt2`, ... over the non-empty lines.
    pub index: String,
    /// The line exactly as submitted.
    pub text: String,
    pub speaker: Speaker,
    pub no_context: Vec<TagPrediction>,
    pub context: ContextPrediction,
    /// Tokens missing from the vocabulary (mapped to `<unk>`).
    pub oov_token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub no_context_model: String,
    pub context_model: String,
    pub context_size: usize,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub api_version: String,
    pub results: Vec<UtteranceResult>,
    /// Tag mnemonic to the number of utterances whose preferred prediction it is.
    pub summary: BTreeMap<String, usize>,
    pub model_metadata: ModelMetadata,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("request contains no non-empty utterances")]
    EmptyRequest,
    #[error("unsupported api_version {0:?} (supported: \"1\")")]
    UnsupportedApiVersion(String),
    #[error("top_k must be between 1 and 42, got {0}")]
    InvalidTopK(usize),
    #[error("models are incompatible: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AnalysisError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::EmptyRequest => "empty_request",
            AnalysisError::UnsupportedApiVersion(_) => "unsupported_api_version",
            AnalysisError::InvalidTopK(_) => "invalid_top_k",
            AnalysisError::Incompatible(_) => "incompatible_models",
            AnalysisError::Model(_) => "model_error",
        }
    }
}

/// The `k` most probable tags, most probable first; ties go to the lower tag index.
pub fn top_k(distribution: &[f32], k: usize) -> Result<Vec<TagPrediction>, AnalysisError> {
    if !(1..=NUM_TAGS).contains(&k) {
        return Err(AnalysisError::InvalidTopK(k));
    }
    if distribution.len() != NUM_TAGS {
        return Err(AnalysisError::Model(ModelError::Invalid(format!(
            "distribution over {} classes, expected {NUM_TAGS}",
            distribution.len()
        ))));
    }
    let mut order: Vec<usize> = (0..NUM_TAGS).collect();
    order.sort_by(|&a, &b| distribution[b].total_cmp(&distribution[a]));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| {
            let tag = &tag_set().tags()[i];
            TagPrediction { tag: tag.mnemonic.clone(), name: tag.display_name.clone(), confidence: distribution[i] }
        })
        .collect())
}

/// Count preferred predictions per tag: the context model's top tag where it
/// produced one, the no-context model's otherwise.
pub fn summarize(results: &[UtteranceResult]) -> Result<BTreeMap<String, usize>, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::EmptyRequest);
    }
    let mut summary = BTreeMap::new();
    for r in results {
        let preferred = r.context.predictions().unwrap_or(&r.no_context);
        if let Some(top) = preferred.first() {
            *summary.entry(top.tag.clone()).or_insert(0) += 1;
        }
    }
    Ok(summary)
}

/// Both models, checked for compatibility once.
#[derive(Debug, Clone)]
pub struct Analyzer {
    no_context: Arc<NoContextModel>,
    context: Arc<ContextModel>,
}

struct PreparedLine<'a> {
    text: &'a str,
    tokens: Vec<String>,
}

impl Analyzer {
    pub fn new(no_context: Arc<NoContextModel>, context: Arc<ContextModel>) -> Result<Self, AnalysisError> {
        let encoder = context.encoder();
        if no_context.vocab() != encoder.vocab() {
            return Err(AnalysisError::Incompatible("vocabularies differ".into()));
        }
        if no_context.max_len() != encoder.max_len() {
            return Err(AnalysisError::Incompatible(format!(
                "max_len {} vs {}",
                no_context.max_len(),
                encoder.max_len()
            )));
        }
        Ok(Analyzer { no_context, context })
    }

    pub fn no_context(&self) -> &NoContextModel {
        &self.no_context
    }

    pub fn context(&self) -> &ContextModel {
        &self.context
    }

    pub fn context_size(&self) -> usize {
        self.context.context_size()
    }

    pub fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            no_context_model: self.no_context.model_id(),
            context_model: self.context.model_id(),
            context_size: self.context.context_size(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn analyze(&self, request: &AnalysisRequest) -> Result<AnalysisResult, AnalysisError> {
        if request.api_version != API_VERSION {
            return Err(AnalysisError::UnsupportedApiVersion(request.api_version.clone()));
        }
        if !(1..=NUM_TAGS).contains(&request.top_k) {
            return Err(AnalysisError::InvalidTopK(request.top_k));
        }
        let lines: Vec<PreparedLine> = request
            .utterances
            .iter()
            .map(|text| PreparedLine { text, tokens: tokenize(&clean_utterance(text)) })
            .filter(|l| !l.tokens.is_empty())
            .collect();
        if lines.is_empty() {
            return Err(AnalysisError::EmptyRequest);
        }

        let encoder = self.context.encoder();
        let n = self.context.context_size();
        let mut reps = Vec::with_capacity(lines.len());
        let mut results = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            let ids = self.no_context.encode_tokens(&line.tokens);
            let no_context = top_k(&self.no_context.predict_no_context(&ids)?, request.top_k)?;
            reps.push(encoder.encode_utterance_rep(&encoder.encode_tokens(&line.tokens))?);
            let context = if i >= n {
                let dist = self.context.predict_from_representations(&reps[i - n..=i])?;
                ContextPrediction::Predictions(top_k(&dist, request.top_k)?)
            } else {
                ContextPrediction::Marker(ContextMarker::NotEnoughContext)
            };
            let vocab = self.no_context.vocab();
            results.push(UtteranceResult {
                index: format!("utt{}", i + 1),
                text: line.text.to_string(),
                speaker: Speaker::alternating(i),
                no_context,
                context,
                oov_token_count: line.tokens.iter().filter(|t| vocab.index_of(t).is_none()).count(),
            });
        }
        let summary = summarize(&results)?;
        Ok(AnalysisResult { api_version: API_VERSION.to_string(), results, summary, model_metadata: self.metadata() })
    }
}

/// Tag id of the top entry of a prediction list.
pub fn top_tag(predictions: &[TagPrediction]) -> Option<TagId> {
    predictions.first().and_then(|p| tag_set().by_mnemonic(&p.tag))
}

/// Full-distribution argmax as a tag id (ties to the lowest index).
pub fn argmax_tag(distribution: &[f32]) -> TagId {
    TagId::from_index(argmax(distribution)).expect("distribution over the tag set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::models::ModelDims;
    use crate::nn::ParamSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn analyzer(n: usize) -> Analyzer {
        let tokens = ["<pad>", "<unk>", "yeah", ".", "do", "you", "?", "i", "think", "so"];
        let vocab = Vocabulary::from_tokens(tokens.iter().map(|s| s.to_string()).collect(), 1).unwrap();
        let encoder =
            Arc::new(NoContextModel::new(vocab, 8, ModelDims::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        let context = Arc::new(ContextModel::new(encoder.clone(), n, 64, &mut ChaCha8Rng::seed_from_u64(2)).unwrap());
        Analyzer::new(encoder, context).unwrap()
    }

    fn request(lines: &[&str]) -> AnalysisRequest {
        AnalysisRequest::new(lines.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn top_k_uniform_ties_go_low() {
        let top = top_k(&[1.0 / 42.0; 42], 3).unwrap();
        let tags: Vec<&str> = top.iter().map(|p| p.tag.as_str()).collect();
        assert_eq!(tags, ["sd", "b", "sv"]);
        assert!(top.iter().all(|p| p.confidence == 1.0 / 42.0));
    }

    #[test]
    fn top_k_one_hot() {
        let mut d = vec![0.0; 42];
        d[8] = 1.0;
        let top = top_k(&d, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].tag.as_str(), top[0].confidence), ("ny", 1.0));
        assert_eq!(top[0].name, "Yes-Answer");
    }

    #[test]
    fn top_k_full_sort_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let raw: Vec<f32> = (0..42).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f32 = raw.iter().sum();
        let dist: Vec<f32> = raw.iter().map(|x| x / total).collect();
        let top = top_k(&dist, 42).unwrap();
        let mut sorted = dist.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(top.iter().map(|p| p.confidence).collect::<Vec<_>>(), sorted);
        assert!((top.iter().map(|p| p.confidence).sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn top_k_range() {
        assert!(matches!(top_k(&[1.0 / 42.0; 42], 0), Err(AnalysisError::InvalidTopK(0))));
        assert!(matches!(top_k(&[1.0 / 42.0; 42], 43), Err(AnalysisError::InvalidTopK(43))));
    }

    #[test]
    fn summary_counts() {
        let a = analyzer(2);
        let result = a.analyze(&request(&["I think so.", "Yeah.", "I think so.", "Yeah.", "Do you?"])).unwrap();
        assert_eq!(result.summary.values().sum::<usize>(), 5);
        let mut tally = BTreeMap::new();
        for r in &result.results {
            let top = r.context.predictions().unwrap_or(&r.no_context)[0].tag.clone();
            *tally.entry(top).or_insert(0) += 1;
        }
        assert_eq!(tally, result.summary);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn statement_summary() {
        let stmt = TagPrediction { tag: "sd".into(), name: "Statement-non-opinion".into(), confidence: 0.9 };
        let results: Vec<UtteranceResult> = (0..5)
            .map(|i| UtteranceResult {
                index: format!("utt{}", i + 1),
                text: "x".into(),
                speaker: Speaker::alternating(i),
                no_context: vec![stmt.clone()],
                context: ContextPrediction::Predictions(vec![stmt.clone()]),
                oov_token_count: 0,
            })
            .collect();
        assert_eq!(summarize(&results).unwrap(), BTreeMap::from([("sd".to_string(), 5)]));
    }

    #[test]
    fn first_n_rows_lack_context() {
        for n in 1..=3 {
            let a = analyzer(n);
            let result = a.analyze(&request(&["Do you?", "Yeah.", "I think so.", "Yeah.", "So."])).unwrap();
            for (i, r) in result.results.iter().enumerate() {
                assert_eq!(r.context.predictions().is_none(), i < n, "n={n} row {i}");
                assert_eq!(r.no_context.len(), 3);
            }
        }
    }

    #[test]
    fn single_utterance_has_only_no_context_output() {
        let result = analyzer(2).analyze(&request(&["Yeah."])).unwrap();
        assert_eq!(result.results.len(), 1);
        assert_eq!(result.results[0].context, ContextPrediction::Marker(ContextMarker::NotEnoughContext));
        assert_eq!(result.results[0].no_context.len(), 3);
    }

    #[test]
    fn blank_lines_are_dropped_and_text_is_verbatim() {
        let result = analyzer(1).analyze(&request(&["  Yeah. /", "", "<laughter>", "Do {F uh, } you?"])).unwrap();
        let texts: Vec<&str> = result.results.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, ["  Yeah. /", "Do {F uh, } you?"]);
        assert_eq!(result.results[1].index, "utt2");
        assert_eq!(result.results[1].speaker, Speaker::B);
        assert_eq!(result.results[1].oov_token_count, 2);
    }

    #[test]
    fn request_errors() {
        let a = analyzer(2);
        assert!(matches!(a.analyze(&request(&[])), Err(AnalysisError::EmptyRequest)));
        assert!(matches!(a.analyze(&request(&["", "   "])), Err(AnalysisError::EmptyRequest)));
        let mut r = request(&["Yeah."]);
        r.api_version = "2".into();
        assert_eq!(a.analyze(&r).unwrap_err().code(), "unsupported_api_version");
        let mut r = request(&["Yeah."]);
        r.top_k = 50;
        assert_eq!(a.analyze(&r).unwrap_err().code(), "invalid_top_k");
    }

    #[test]
    fn json_shape() {
        let result = analyzer(1).analyze(&request(&["Yeah.", "Yeah."])).unwrap();
        let v = serde_json::to_value(&result).unwrap();
        assert_eq!(v["api_version"], "1");
        assert_eq!(v["results"][0]["context"], "NotEnoughContext");
        assert_eq!(v["results"][0]["speaker"], "A");
        assert!(v["results"][1]["context"].as_array().unwrap().len() == 3);
        let back: AnalysisResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, result);

        let req: AnalysisRequest = serde_json::from_str(r#"{"utterances": ["a"]}"#).unwrap();
        assert_eq!((req.api_version.as_str(), req.top_k), ("1", 3));
    }

    #[test]
    fn deterministic_and_non_mutating() {
        let a = analyzer(2);
        let before = (a.no_context().net().parameter_checksum(), a.context().parameter_checksum());
        let req = request(&["Do you?", "Yeah.", "I think so.", "Yeah."]);
        let first = serde_json::to_string(&a.analyze(&req).unwrap()).unwrap();
        let second = serde_json::to_string(&a.analyze(&req).unwrap()).unwrap();
        assert_eq!(first, second);
        assert_eq!(before, (a.no_context().net().parameter_checksum(), a.context().parameter_checksum()));
    }

    #[test]
    fn incompatible_vocabularies_are_rejected() {
        let a = analyzer(1);
        let vocab = Vocabulary::from_tokens(vec!["<pad>".into(), "<unk>".into(), "x".into()], 1).unwrap();
        let other =
            Arc::new(NoContextModel::new(vocab, 8, ModelDims::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        let err = Analyzer::new(other, Arc::new(a.context().clone())).unwrap_err();
        assert_eq!(err.code(), "incompatible_models");
    }
}
