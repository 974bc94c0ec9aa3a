//! The small SwDA-format corpus shipped in `data/fixture`, used by tests,
//! the acceptance suite and smoke runs of the CLI.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::corpus::{load_swda, read_id_list, split_corpus, CorpusError, CorpusSplit, SplitLists};
use crate::models::{ContextModel, NoContextModel};
use crate::training::{train_context, train_no_context, TrainConfig};

/// Root of the bundled data directory (`tag_clusters.tsv`, fixture corpus, example dialogues).
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn swda_dir() -> PathBuf {
    data_dir().join("fixture/swda")
}

pub fn splits_dir() -> PathBuf {
    data_dir().join("fixture/splits")
}

/// Lines of a bundled example dialogue (`data/dialogues/<name>.txt`).
pub fn dialogue(name: &str) -> Vec<String> {
    let path = data_dir().join("dialogues").join(format!("{name}.txt"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines().map(str::to_string).collect()
}

/// Fixture split: two training conversations, one test conversation, and
/// `validation_count` conversations carved from the end of the train list.
pub fn split(validation_count: usize) -> Result<CorpusSplit, CorpusError> {
    let all = load_swda(&swda_dir())?;
    let lists = SplitLists {
        train: read_id_list(&splits_dir().join("train.txt"))?,
        test: read_id_list(&splits_dir().join("test.txt"))?,
        validation_count,
    };
    split_corpus(&all, &lists)
}

/// Training settings sized for the fixture: every token kept, enough epochs
/// to fit 36 utterances, a higher learning rate and patience so early
/// stopping does not cut the run short.
pub fn train_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs: 60,
        patience: 60,
        learning_rate: 1e-2,
        min_count: 1,
        ..TrainConfig::default()
    }
}

/// Encoder and `n`-context model trained on the fixture split with
/// [`train_config`] capped at `max_epochs`.
pub fn trained_models(n: usize, max_epochs: usize) -> (NoContextModel, ContextModel) {
    let split = split(0).expect("fixture corpus loads");
    let config = TrainConfig { max_epochs, ..train_config() };
    let (encoder, _) = train_no_context(&split, &config).expect("fixture encoder trains");
    let encoder = Arc::new(encoder);
    let (context, _) = train_context(&split, encoder.clone(), n, &config).expect("fixture context model trains");
    (Arc::try_unwrap(encoder).unwrap_or_else(|shared| (*shared).clone()), context)
}
