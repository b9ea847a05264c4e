//! Fault-aware ranker: hashed n-gram features, one linear head per
//! classification task, an optional per-line head, and ranking by the raw
//! `Correct` logit.

pub mod features;
mod model;
pub mod objective;
mod task;
mod train;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{Candidate, Task};
use features::{featurize, featurize_lines, FeatureConfig, FeatureVector, LineFeatureVector};
use objective::SparseRow;

pub use model::{load_model, save_model, LineHead, RankerModel, TrainingMeta, MODEL_MAGIC, MODEL_VERSION};
pub use task::{RankerTask, CORRECT_CLASS};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum RankerError {
    #[error("model version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("example {task_id}/{candidate_id}: {reason}")]
    LabelMismatch {
        task_id: String,
        candidate_id: String,
        reason: String,
    },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("candidate {0} has no generation log-probability")]
    MissingLogprob(String),
    #[error("candidate {candidate_id} belongs to task {candidate_task}, not {task_id}")]
    TaskMismatch {
        task_id: String,
        candidate_task: String,
        candidate_id: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RankerError {
    fn from(e: std::io::Error) -> Self {
        RankerError::Io(e.to_string())
    }
}

/// One line of a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub task_id: String,
    pub candidate_id: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Pre-softmax logit of the `Correct` class.
    pub score: f64,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    /// Argmax line row: 0 = no error, `m + 1` = beyond the window.
    pub predicted_line: Option<usize>,
}

pub(crate) fn model_input(fv: &FeatureVector, config: &FeatureConfig) -> SparseRow {
    SparseRow::new(fv.values(config.normalize))
}

pub(crate) fn line_rows(lines: &LineFeatureVector, config: &FeatureConfig) -> Vec<SparseRow> {
    lines.rows.iter().map(|r| model_input(r, config)).collect()
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

impl RankerModel {
    pub fn class_logits(&self, input: &SparseRow) -> Vec<f64> {
        let d = self.features.dim;
        (0..self.num_classes())
            .map(|k| {
                let row = &self.weights[k * d..(k + 1) * d];
                let dot: f64 = input
                    .entries
                    .iter()
                    .map(|&(j, v)| f64::from(row[j as usize]) * v)
                    .sum();
                dot + f64::from(self.bias[k])
            })
            .collect()
    }

    pub fn line_scores(&self, rows: &[SparseRow]) -> Option<Vec<f64>> {
        let head = self.line_head.as_ref()?;
        Some(
            rows.iter()
                .map(|r| {
                    r.entries
                        .iter()
                        .map(|&(j, v)| f64::from(head.weights[j as usize]) * v)
                        .sum::<f64>()
                        + f64::from(head.bias)
                })
                .collect(),
        )
    }
}

pub fn predict(model: &RankerModel, prompt: &str, code: &str) -> Result<Prediction, RankerError> {
    model.check_version()?;
    let input = model_input(&featurize(prompt, code, &model.features), &model.features);
    let logits = model.class_logits(&input);
    let probabilities = objective::softmax(&logits);
    let predicted_line = if model.line_head.is_some() {
        let lines = featurize_lines(prompt, code, &model.features);
        model
            .line_scores(&line_rows(&lines, &model.features))
            .map(|s| argmax(&s))
    } else {
        None
    };
    Ok(Prediction {
        score: logits[CORRECT_CLASS],
        predicted_class: argmax(&logits),
        logits,
        probabilities,
        predicted_line,
    })
}

/// Raw `Correct`-class logit; higher means more likely correct.
pub fn score(model: &RankerModel, prompt: &str, code: &str) -> Result<f64, RankerError> {
    Ok(predict(model, prompt, code)?.score)
}

/// Descending score, ties broken by ascending candidate id.
pub fn compare_ranked(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

pub fn sort_ranked(records: &mut [ScoreRecord]) {
    records.sort_by(|a, b| {
        compare_ranked((a.score, &a.candidate_id), (b.score, &b.candidate_id))
    });
}

/// Scores every candidate of one task and returns them best first.
pub fn rank(
    model: &RankerModel,
    task: &Task,
    candidates: &[Candidate],
) -> Result<Vec<ScoreRecord>, RankerError> {
    model.check_version()?;
    if let Some(c) = candidates.iter().find(|c| c.task_id != task.task_id) {
        return Err(RankerError::TaskMismatch {
            task_id: task.task_id.clone(),
            candidate_task: c.task_id.clone(),
            candidate_id: c.candidate_id.clone(),
        });
    }
    let mut records = candidates
        .par_iter()
        .map(|c| {
            let p = predict(model, &task.prompt, &c.code)?;
            Ok(ScoreRecord {
                task_id: c.task_id.clone(),
                candidate_id: c.candidate_id.clone(),
                score: p.score,
                predicted_class: Some(model.classes[p.predicted_class].clone()),
                predicted_line: p.predicted_line,
            })
        })
        .collect::<Result<Vec<_>, RankerError>>()?;
    sort_ranked(&mut records);
    Ok(records)
}

/// Baseline ordering by the generator's own log-probability.
pub fn rank_by_logprob(candidates: &[Candidate]) -> Result<Vec<ScoreRecord>, RankerError> {
    let mut records = candidates
        .iter()
        .map(|c| {
            let lp = c
                .gen_logprob
                .ok_or_else(|| RankerError::MissingLogprob(c.candidate_id.clone()))?;
            Ok(ScoreRecord {
                task_id: c.task_id.clone(),
                candidate_id: c.candidate_id.clone(),
                score: lp,
                predicted_class: None,
                predicted_line: None,
            })
        })
        .collect::<Result<Vec<_>, RankerError>>()?;
    sort_ranked(&mut records);
    Ok(records)
}
