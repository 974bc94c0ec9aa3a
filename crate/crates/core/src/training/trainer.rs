use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{argmax, evaluate, ContextPredictor, EvalReport};
use super::{BoundaryPolicy, TrainConfig, TrainError};
use crate::corpus::{build_vocabulary, encode_utterance, Conversation, CorpusSplit, PAD};
use crate::models::{ContextModel, ContextNet, NoContextModel, UtteranceNet};
use crate::nn::{
    adam_step, cross_entropy, dense_backward, dense_softmax, lstm_backward, AdamState, DenseParams, LstmParams,
    NnError, ParamSet, Tensor,
};

/// Examples per gradient-reduction chunk. Fixed so that results do not depend
/// on how many threads happen to run the chunks.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub monitored_accuracy: f64,
    pub improved: bool,
}

/// Everything recorded about one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_size: Option<usize>,
    pub config: TrainConfig,
    pub model_id: String,
    pub train_examples: usize,
    pub train_skipped: usize,
    /// Mean loss of the first mini-batch, before any update.
    pub initial_loss: f64,
    /// Split whose accuracy drives early stopping ("validation", or "train" when
    /// the validation split is empty).
    pub monitored_split: String,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<EvalReport>,
    pub test: EvalReport,
}

/// A training objective over indexed examples.
trait Objective: Sync {
    type Net: ParamSet<f32> + Clone + Send + Sync;
    type Chunk: Send;

    fn example_count(&self) -> usize;
    /// Summed loss and gradient contributions of the examples in `batch`.
    fn chunk(&self, net: &Self::Net, batch: &[usize]) -> Result<(f64, Self::Chunk), NnError>;
    /// Add `scale * chunk` into `grads`.
    fn accumulate(&self, grads: &mut Self::Net, chunk: Self::Chunk, scale: f32);
    fn monitor(&self, net: &Self::Net) -> Result<f64, TrainError>;
}

struct Outcome<N> {
    best: N,
    initial_loss: f64,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    stopped_early: bool,
}

fn add_scaled(dst: &mut Tensor<f32>, src: &Tensor<f32>, scale: f32) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += scale * s;
    }
}

fn run<O: Objective>(
    objective: &O,
    mut net: O::Net,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome<O::Net>, TrainError> {
    let count = objective.example_count();
    if count == 0 {
        return Err(TrainError::NoExamples);
    }
    let adam = config.adam();
    let mut state = AdamState::new();
    let mut grads = net.clone();
    let mut order: Vec<usize> = (0..count).collect();
    let mut initial_loss = None;
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, O::Net)> = None;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let parts = batch.par_chunks(CHUNK).map(|c| objective.chunk(&net, c)).collect::<Vec<_>>();
            grads.zero_all();
            let scale = 1.0 / batch.len() as f32;
            let mut loss_sum = 0.0;
            for part in parts {
                let (loss, chunk) = part?;
                loss_sum += loss;
                objective.accumulate(&mut grads, chunk, scale);
            }
            let mean = loss_sum / batch.len() as f64;
            if !mean.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b, loss: mean });
            }
            initial_loss.get_or_insert(mean);
            adam_step(&mut net, &grads, &mut state, &adam)?;
            epoch_loss += mean;
            batches += 1;
        }
        let accuracy = objective.monitor(&net)?;
        let improved = best.as_ref().is_none_or(|(b, _, _)| accuracy > *b);
        let train_loss = epoch_loss / batches as f64;
        tracing::info!(epoch, train_loss, monitored_accuracy = accuracy, improved, "epoch finished");
        history.push(EpochRecord { epoch, train_loss, monitored_accuracy: accuracy, improved });
        if improved {
            best = Some((accuracy, epoch, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(Outcome { best, initial_loss: initial_loss.expect("at least one batch"), history, best_epoch, stopped_early })
}

struct UtteranceObjective {
    train: Vec<(Vec<u32>, usize)>,
    monitor: Vec<(Vec<u32>, usize)>,
}

struct UtteranceChunk {
    encoder: LstmParams<f32>,
    output: DenseParams<f32>,
    rows: Vec<(u32, Vec<f32>)>,
}

fn accuracy_of(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

impl Objective for UtteranceObjective {
    type Net = UtteranceNet<f32>;
    type Chunk = UtteranceChunk;

    fn example_count(&self) -> usize {
        self.train.len()
    }

    fn chunk(&self, net: &Self::Net, batch: &[usize]) -> Result<(f64, Self::Chunk), NnError> {
        let mut encoder = LstmParams::zeros(net.encoder.input_dim(), net.encoder.hidden());
        let mut output = DenseParams::zeros(net.output.input_dim(), net.output.classes());
        let mut rows = Vec::new();
        let mut loss = 0.0;
        for &i in batch {
            let (ids, target) = &self.train[i];
            let trace = net.represent(ids)?;
            let probs = dense_softmax(&trace.representation, &net.output)?;
            loss += cross_entropy(&probs, *target)? as f64;
            let d_rep = dense_backward(&net.output, &trace.representation, &probs, *target, &mut output)?;
            let d_embedded = lstm_backward(&net.encoder, &trace.lstm, &d_rep, &mut encoder)?;
            for (step, &id) in ids.iter().enumerate() {
                if id != PAD {
                    rows.push((id, d_embedded.row(step).to_vec()));
                }
            }
        }
        Ok((loss, UtteranceChunk { encoder, output, rows }))
    }

    fn accumulate(&self, grads: &mut Self::Net, chunk: Self::Chunk, scale: f32) {
        add_scaled(&mut grads.encoder.input_weights, &chunk.encoder.input_weights, scale);
        add_scaled(&mut grads.encoder.recurrent_weights, &chunk.encoder.recurrent_weights, scale);
        add_scaled(&mut grads.encoder.bias, &chunk.encoder.bias, scale);
        add_scaled(&mut grads.output.weights, &chunk.output.weights, scale);
        add_scaled(&mut grads.output.bias, &chunk.output.bias, scale);
        for (id, row) in chunk.rows {
            for (d, s) in grads.embedding.weights.row_mut(id as usize).iter_mut().zip(row) {
                *d += scale * s;
            }
        }
    }

    fn monitor(&self, net: &Self::Net) -> Result<f64, TrainError> {
        let hits = self
            .monitor
            .par_iter()
            .map(|(ids, target)| net.predict(ids).map(|p| usize::from(argmax(&p) == *target)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(accuracy_of(hits.iter().sum(), hits.len()))
    }
}

fn encode_split(
    conversations: &[Conversation],
    vocab: &crate::corpus::Vocabulary,
    max_len: usize,
) -> Vec<(Vec<u32>, usize)> {
    conversations
        .iter()
        .flat_map(|c| &c.utterances)
        .map(|u| (encode_utterance(vocab, &u.tokens, max_len), u.tag.index()))
        .collect()
}

fn monitored(split: &CorpusSplit) -> (&[Conversation], &'static str) {
    if split.validation.iter().any(|c| !c.is_empty()) {
        (&split.validation, "validation")
    } else {
        (&split.train, "train")
    }
}

/// Train the utterance-level classifier and report on validation and test.
pub fn train_no_context(split: &CorpusSplit, config: &TrainConfig) -> Result<(NoContextModel, TrainRun), TrainError> {
    config.validate()?;
    let vocab = build_vocabulary(&split.train, config.min_count)?;
    let (monitor_convs, monitored_split) = monitored(split);
    let objective = UtteranceObjective {
        train: encode_split(&split.train, &vocab, config.max_len),
        monitor: encode_split(monitor_convs, &vocab, config.max_len),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = NoContextModel::new(vocab.clone(), config.max_len, config.dims(), &mut rng)?;
    let outcome = run(&objective, initial.net().clone(), config, &mut rng)?;
    let model = NoContextModel::from_parts(vocab, config.max_len, outcome.best)?;

    let validation =
        if split.validation.is_empty() { None } else { Some(evaluate(&model, &split.validation, "validation")?) };
    let test = evaluate(&model, &split.test, "test")?;
    let run = TrainRun {
        phase: "no_context".into(),
        context_size: None,
        config: config.clone(),
        model_id: model.model_id(),
        train_examples: objective.train.len(),
        train_skipped: 0,
        initial_loss: outcome.initial_loss,
        monitored_split: monitored_split.into(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        history: outcome.history,
        validation,
        test,
    };
    Ok((model, run))
}

/// One context-model example: the utterance at `position` of conversation
/// `conversation` with its `n` predecessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowExample {
    pub conversation: usize,
    pub position: usize,
}

/// Enumerate context windows within conversation boundaries. Returns the
/// examples and the number of utterances skipped under `policy`.
pub fn context_windows(
    conversations: &[Conversation],
    n: usize,
    policy: BoundaryPolicy,
) -> (Vec<WindowExample>, usize) {
    let mut examples = Vec::new();
    let mut skipped = 0;
    for (c, conv) in conversations.iter().enumerate() {
        for position in 0..conv.len() {
            if position < n && policy == BoundaryPolicy::Skip {
                skipped += 1;
            } else {
                examples.push(WindowExample { conversation: c, position });
            }
        }
    }
    (examples, skipped)
}

/// Frozen-encoder representations of every utterance, per conversation.
pub(crate) struct Representations {
    reps: Vec<Vec<Vec<f32>>>,
    tags: Vec<Vec<usize>>,
    dim: usize,
}

impl Representations {
    pub(crate) fn compute(encoder: &NoContextModel, conversations: &[Conversation]) -> Result<Self, TrainError> {
        let reps = conversations
            .par_iter()
            .map(|c| {
                c.utterances
                    .iter()
                    .map(|u| encoder.encode_utterance_rep(&encoder.encode_tokens(&u.tokens)))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let tags = conversations.iter().map(|c| c.utterances.iter().map(|u| u.tag.index()).collect()).collect();
        Ok(Representations { reps, tags, dim: encoder.hidden() })
    }

    fn window(&self, example: WindowExample, n: usize) -> Result<Tensor<f32>, NnError> {
        let conv = &self.reps[example.conversation];
        let t = example.position;
        let missing = n.saturating_sub(t);
        let mut data = vec![0.0; missing * self.dim];
        for rep in &conv[t + missing - n..=t] {
            data.extend_from_slice(rep);
        }
        Tensor::new(vec![n + 1, self.dim], data)
    }

    fn target(&self, example: WindowExample) -> usize {
        self.tags[example.conversation][example.position]
    }
}

struct ContextObjective<'a> {
    n: usize,
    train_reps: &'a Representations,
    train: Vec<WindowExample>,
    monitor_reps: &'a Representations,
    monitor: Vec<WindowExample>,
}

impl Objective for ContextObjective<'_> {
    type Net = ContextNet<f32>;
    type Chunk = ContextNet<f32>;

    fn example_count(&self) -> usize {
        self.train.len()
    }

    fn chunk(&self, net: &Self::Net, batch: &[usize]) -> Result<(f64, Self::Chunk), NnError> {
        let mut grads = net.zeros_like();
        let mut loss = 0.0;
        for &i in batch {
            let example = self.train[i];
            let window = self.train_reps.window(example, self.n)?;
            let (l, _) = net.loss_and_grad(&window, self.train_reps.target(example), &mut grads)?;
            loss += l as f64;
        }
        Ok((loss, grads))
    }

    fn accumulate(&self, grads: &mut Self::Net, chunk: Self::Chunk, scale: f32) {
        add_scaled(&mut grads.lstm.input_weights, &chunk.lstm.input_weights, scale);
        add_scaled(&mut grads.lstm.recurrent_weights, &chunk.lstm.recurrent_weights, scale);
        add_scaled(&mut grads.lstm.bias, &chunk.lstm.bias, scale);
        add_scaled(&mut grads.output.weights, &chunk.output.weights, scale);
        add_scaled(&mut grads.output.bias, &chunk.output.bias, scale);
    }

    fn monitor(&self, net: &Self::Net) -> Result<f64, TrainError> {
        let hits = self
            .monitor
            .par_iter()
            .map(|&e| {
                let window = self.monitor_reps.window(e, self.n)?;
                net.predict(&window).map(|p| usize::from(argmax(&p) == self.monitor_reps.target(e)))
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(accuracy_of(hits.iter().sum(), hits.len()))
    }
}

/// Train a context model of size `n` on top of a frozen encoder.
pub fn train_context(
    split: &CorpusSplit,
    encoder: Arc<NoContextModel>,
    n: usize,
    config: &TrainConfig,
) -> Result<(ContextModel, TrainRun), TrainError> {
    let (monitor_convs, _) = monitored(split);
    let train_reps = Representations::compute(&encoder, &split.train)?;
    let monitor_reps = Representations::compute(&encoder, monitor_convs)?;
    train_context_with(split, encoder, n, config, &train_reps, &monitor_reps)
}

pub(crate) fn train_context_with(
    split: &CorpusSplit,
    encoder: Arc<NoContextModel>,
    n: usize,
    config: &TrainConfig,
    train_reps: &Representations,
    monitor_reps: &Representations,
) -> Result<(ContextModel, TrainRun), TrainError> {
    config.validate()?;
    if n == 0 {
        return Err(TrainError::Config("context size n must be at least 1".into()));
    }
    let (monitor_convs, monitored_split) = monitored(split);
    let (train, train_skipped) = context_windows(&split.train, n, config.boundary_policy);
    let (monitor, _) = context_windows(monitor_convs, n, config.boundary_policy);
    let objective = ContextObjective { n, train_reps, train, monitor_reps, monitor };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let initial = ContextModel::new(encoder.clone(), n, config.context_hidden, &mut rng)?;
    let outcome = run(&objective, initial.net().clone(), config, &mut rng)?;
    let model = ContextModel::from_parts(encoder, n, outcome.best)?;

    let predictor = ContextPredictor { model: &model, policy: config.boundary_policy };
    let validation =
        if split.validation.is_empty() { None } else { Some(evaluate(&predictor, &split.validation, "validation")?) };
    let test = evaluate(&predictor, &split.test, "test")?;
    let run = TrainRun {
        phase: "context".into(),
        context_size: Some(n),
        config: TrainConfig { context_size: n, ..config.clone() },
        model_id: model.model_id(),
        train_examples: objective.train.len(),
        train_skipped,
        initial_loss: outcome.initial_loss,
        monitored_split: monitored_split.into(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        history: outcome.history,
        validation,
        test,
    };
    Ok((model, run))
}
