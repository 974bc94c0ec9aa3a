use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BoundaryPolicy;
use crate::corpus::{tag_set, Conversation, TagId};
use crate::models::{ContextModel, ModelError, NoContextModel};
use crate::NUM_TAGS;

/// Anything that can label every utterance of a conversation. `None` marks
/// an utterance the predictor abstains on (a context-window boundary).
pub trait Predictor: Sync {
    fn predict_conversation(&self, conversation: &Conversation) -> Result<Vec<Option<Vec<f32>>>, ModelError>;
}

impl Predictor for NoContextModel {
    fn predict_conversation(&self, conversation: &Conversation) -> Result<Vec<Option<Vec<f32>>>, ModelError> {
        conversation
            .utterances
            .iter()
            .map(|u| self.predict_no_context(&self.encode_tokens(&u.tokens)).map(Some))
            .collect()
    }
}

/// A context model plus the policy for conversation-initial utterances.
#[derive(Debug, Clone, Copy)]
pub struct ContextPredictor<'a> {
    pub model: &'a ContextModel,
    pub policy: BoundaryPolicy,
}

impl Predictor for ContextPredictor<'_> {
    fn predict_conversation(&self, conversation: &Conversation) -> Result<Vec<Option<Vec<f32>>>, ModelError> {
        let encoder = self.model.encoder();
        let reps = conversation
            .utterances
            .iter()
            .map(|u| encoder.encode_utterance_rep(&encoder.encode_tokens(&u.tokens)))
            .collect::<Result<Vec<_>, _>>()?;
        let n = self.model.context_size();
        let zero = vec![0.0; encoder.hidden()];
        (0..reps.len())
            .map(|t| {
                if t >= n {
                    return self.model.predict_from_representations(&reps[t - n..=t]).map(Some);
                }
                match self.policy {
                    BoundaryPolicy::Skip => Ok(None),
                    BoundaryPolicy::Pad => {
                        let mut window = vec![zero.clone(); n - t];
                        window.extend_from_slice(&reps[..=t]);
                        self.model.predict_from_representations(&window).map(Some)
                    }
                }
            })
            .collect()
    }
}

/// Always predicts the same tag (the most-common-class baseline).
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub TagId);

impl Predictor for ConstantPredictor {
    fn predict_conversation(&self, conversation: &Conversation) -> Result<Vec<Option<Vec<f32>>>, ModelError> {
        Ok(conversation.utterances.iter().map(|_| Some(one_hot(self.0.index()))).collect())
    }
}

/// Predicts the gold tag. Used to sanity-check the evaluation arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict_conversation(&self, conversation: &Conversation) -> Result<Vec<Option<Vec<f32>>>, ModelError> {
        Ok(conversation.utterances.iter().map(|u| Some(one_hot(u.tag.index()))).collect())
    }
}

fn one_hot(index: usize) -> Vec<f32> {
    let mut v = vec![0.0; NUM_TAGS];
    v[index] = 1.0;
    v
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(dist: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate().skip(1) {
        if p > dist[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMetrics {
    pub tag: String,
    pub support: usize,
    pub predicted: usize,
    pub correct: usize,
    /// `None` when the tag was never predicted.
    pub precision: Option<f64>,
    /// `None` when the tag never occurs in the split.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub accuracy: f64,
    pub correct: usize,
    pub utterances_evaluated: usize,
    pub utterances_skipped: usize,
    pub per_tag: Vec<TagMetrics>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn accuracy_percent(&self) -> f64 {
        self.accuracy * 100.0
    }
}

/// Argmax accuracy of `predictor` over `conversations`, plus per-tag metrics
/// and the confusion matrix. Abstentions count as skipped, not as errors.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    conversations: &[Conversation],
    split: &str,
) -> Result<EvalReport, ModelError> {
    let predictions =
        conversations.par_iter().map(|c| predictor.predict_conversation(c)).collect::<Result<Vec<_>, _>>()?;

    let mut confusion = vec![vec![0usize; NUM_TAGS]; NUM_TAGS];
    let mut skipped = 0;
    for (conversation, preds) in conversations.iter().zip(&predictions) {
        if preds.len() != conversation.len() {
            return Err(ModelError::Invalid(format!(
                "{} predictions for {} utterances in {}",
                preds.len(),
                conversation.len(),
                conversation.id
            )));
        }
        for (utt, pred) in conversation.utterances.iter().zip(preds) {
            match pred {
                None => skipped += 1,
                Some(dist) if dist.len() == NUM_TAGS => confusion[utt.tag.index()][argmax(dist)] += 1,
                Some(dist) => {
                    return Err(ModelError::Invalid(format!(
                        "distribution over {} classes, expected {NUM_TAGS}",
                        dist.len()
                    )))
                }
            }
        }
    }

    let evaluated: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..NUM_TAGS).map(|i| confusion[i][i]).sum();
    let per_tag = tag_set()
        .tags()
        .iter()
        .map(|tag| {
            let i = tag.index;
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let hit = confusion[i][i];
            TagMetrics {
                tag: tag.mnemonic.clone(),
                support,
                predicted,
                correct: hit,
                precision: (predicted > 0).then(|| hit as f64 / predicted as f64),
                recall: (support > 0).then(|| hit as f64 / support as f64),
            }
        })
        .collect();
    Ok(EvalReport {
        split: split.to_string(),
        accuracy: if evaluated == 0 { 0.0 } else { correct as f64 / evaluated as f64 },
        correct,
        utterances_evaluated: evaluated,
        utterances_skipped: skipped,
        per_tag,
        confusion,
    })
}
