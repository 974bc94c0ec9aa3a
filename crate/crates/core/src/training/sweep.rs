use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::EvalReport;
use super::trainer::{train_context_with, Representations, TrainRun};
use super::{TrainConfig, TrainError};
use crate::corpus::CorpusSplit;
use crate::models::{ContextModel, NoContextModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub setup: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_size: Option<usize>,
    /// Accuracy in percent.
    pub accuracy: f64,
    pub utterances_evaluated: usize,
    pub utterances_skipped: usize,
}

/// Accuracy table in the layout "model setup / Acc.(%)".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultsTable {
    pub split: String,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new(split: &str) -> Self {
        ResultsTable { split: split.to_string(), rows: Vec::new() }
    }

    pub fn push_baseline(&mut self, accuracy: f64, evaluated: usize) {
        self.rows.push(ResultRow {
            setup: "Most common class".into(),
            context_size: None,
            accuracy: accuracy * 100.0,
            utterances_evaluated: evaluated,
            utterances_skipped: 0,
        });
    }

    pub fn push_no_context(&mut self, report: &EvalReport) {
        self.push_report("Non-utterance-context model".into(), None, report);
    }

    pub fn push_context(&mut self, n: usize, report: &EvalReport) {
        let unit = if n == 1 { "utt." } else { "utts." };
        self.push_report(format!("Context-based model (n={n} {unit})"), Some(n), report);
    }

    fn push_report(&mut self, setup: String, context_size: Option<usize>, report: &EvalReport) {
        self.rows.push(ResultRow {
            setup,
            context_size,
            accuracy: report.accuracy_percent(),
            utterances_evaluated: report.utterances_evaluated,
            utterances_skipped: report.utterances_skipped,
        });
    }

    pub fn render_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.setup.len()).max().unwrap_or(0).max("Model setup".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}  {:>7}", "Model setup", "Acc.(%)", "Evaluated", "Skipped");
        let _ = writeln!(out, "{}", "-".repeat(width + 32));
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.2}  {:>9}  {:>7}",
                r.setup, r.accuracy, r.utterances_evaluated, r.utterances_skipped
            );
        }
        let _ = write!(out, "({} split)", self.split);
        out
    }
}

pub struct SweepResult {
    pub models: Vec<ContextModel>,
    pub runs: Vec<TrainRun>,
    pub table: ResultsTable,
}

/// Train one context model per `n` over a shared frozen encoder. Encoder
/// representations are computed once; the runs proceed concurrently.
pub fn context_sweep(
    split: &CorpusSplit,
    encoder: Arc<NoContextModel>,
    n_values: &[usize],
    config: &TrainConfig,
) -> Result<SweepResult, TrainError> {
    let monitor_convs = if split.validation.iter().any(|c| !c.is_empty()) { &split.validation } else { &split.train };
    let train_reps = Representations::compute(&encoder, &split.train)?;
    let monitor_reps = Representations::compute(&encoder, monitor_convs)?;
    let trained = n_values
        .par_iter()
        .map(|&n| train_context_with(split, encoder.clone(), n, config, &train_reps, &monitor_reps))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = ResultsTable::new("test");
    let mut models = Vec::with_capacity(trained.len());
    let mut runs = Vec::with_capacity(trained.len());
    for (model, run) in trained {
        table.push_context(model.context_size(), &run.test);
        models.push(model);
        runs.push(run);
    }
    Ok(SweepResult { models, runs, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_table_layout() {
        let mut t = ResultsTable::new("test");
        t.push_baseline(0.315, 4186);
        let text = t.render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Model setup"));
        assert!(lines[2].starts_with("Most common class"));
        assert!(lines[2].contains("31.50"));
        assert!(lines[2].contains("4186"));
    }

    #[test]
    fn context_row_labels() {
        let report = EvalReport {
            split: "test".into(),
            accuracy: 0.5,
            correct: 1,
            utterances_evaluated: 2,
            utterances_skipped: 2,
            per_tag: Vec::new(),
            confusion: Vec::new(),
        };
        let mut t = ResultsTable::new("test");
        t.push_context(1, &report);
        t.push_context(2, &report);
        assert_eq!(t.rows[0].setup, "Context-based model (n=1 utt.)");
        assert_eq!(t.rows[1].setup, "Context-based model (n=2 utts.)");
        assert_eq!(t.rows[1].utterances_skipped, 2);
    }
}
