//! Ranker datasets: task-grouped splits, per-task-type class statistics,
//! inverse-frequency class weights and dataset mixing.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ExecutionReport;
use crate::ranker::RankerTask;
use crate::taxonomy::{Binary, ClassLabel, Exec12, FaultLabelSet, Intent11, Ternary};

/// One labeled `(task, candidate)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerExample {
    pub task_id: String,
    pub candidate_id: String,
    pub prompt: String,
    pub code: String,
    pub labels: FaultLabelSet,
    pub source_model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_logprob: Option<f64>,
    /// The execution report the labels were derived from, when kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ExecutionReport>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("{partition} partition would hold no tasks")]
    EmptyPartition { partition: &'static str },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("sample fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    /// Draw validation tasks only from tasks with at least one correct candidate.
    #[serde(default)]
    pub require_solvable: bool,
}

/// Label counts per task type (`binary`, `ternary`, `intent`, `exec`, `line`)
/// and the derived class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub examples: usize,
    pub tasks: usize,
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    /// Wrong-to-Correct ratio; absent when there are no correct examples.
    pub imbalance_ratio: Option<f64>,
}

const LINE_KEY: &str = "line";

fn stats_key(task: RankerTask) -> &'static str {
    match task {
        RankerTask::Binary => "binary",
        RankerTask::Ternary => "ternary",
        RankerTask::Intent => "intent",
        RankerTask::Exec | RankerTask::ExecLine => "exec",
    }
}

fn zeroed<L: ClassLabel>() -> BTreeMap<String, u64> {
    L::names().into_iter().map(|n| (n.to_string(), 0)).collect()
}

/// `weight_c = N / (K_nonempty * N_c)` for nonempty classes, 0 for empty ones.
pub fn inverse_frequency_weights(counts: &BTreeMap<String, u64>) -> BTreeMap<String, f64> {
    let total: u64 = counts.values().sum();
    let nonempty = counts.values().filter(|&&c| c > 0).count();
    counts
        .iter()
        .map(|(class, &n)| {
            let w = if n == 0 {
                0.0
            } else {
                total as f64 / (nonempty as f64 * n as f64)
            };
            (class.clone(), w)
        })
        .collect()
}

impl ClassStats {
    pub fn from_examples(examples: &[RankerExample]) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        counts.insert("binary".into(), zeroed::<Binary>());
        counts.insert("ternary".into(), zeroed::<Ternary>());
        counts.insert("intent".into(), zeroed::<Intent11>());
        counts.insert("exec".into(), zeroed::<Exec12>());
        counts.insert(LINE_KEY.into(), BTreeMap::new());
        let bump = |counts: &mut BTreeMap<String, BTreeMap<String, u64>>, key: &str, class: String| {
            *counts.get_mut(key).unwrap().entry(class).or_insert(0) += 1;
        };
        for ex in examples {
            let l = &ex.labels;
            bump(&mut counts, "binary", l.binary.name().into());
            bump(&mut counts, "ternary", l.ternary.name().into());
            bump(&mut counts, "intent", l.intent11.name().into());
            bump(&mut counts, "exec", l.exec12.name().into());
            bump(&mut counts, LINE_KEY, l.line_class.to_string());
        }
        let weights = counts
            .iter()
            .map(|(k, c)| (k.clone(), inverse_frequency_weights(c)))
            .collect();
        let binary = &counts["binary"];
        let (correct, wrong) = (binary["Correct"], binary["Wrong"]);
        let tasks = examples.iter().map(|e| e.task_id.as_str()).collect::<HashSet<_>>().len();
        Self {
            examples: examples.len(),
            tasks,
            counts,
            weights,
            imbalance_ratio: (correct > 0).then(|| wrong as f64 / correct as f64),
        }
    }

    pub fn counts_for(&self, task: RankerTask) -> &BTreeMap<String, u64> {
        &self.counts[stats_key(task)]
    }
}

/// Class weights for a ranker task, in the task's class order.
pub fn compute_class_weights(stats: &ClassStats, task: RankerTask) -> BTreeMap<String, f64> {
    inverse_frequency_weights(stats.counts_for(task))
}

/// The same weights as a vector indexed by class.
pub fn class_weight_vector(stats: &ClassStats, task: RankerTask) -> Vec<f64> {
    let weights = compute_class_weights(stats, task);
    task.classes().iter().map(|c| weights[*c]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub examples: Vec<RankerExample>,
    pub stats: ClassStats,
}

impl Partition {
    fn new(examples: Vec<RankerExample>) -> Self {
        let stats = ClassStats::from_examples(&examples);
        Self { examples, stats }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Partition,
    pub val: Partition,
    pub test: Partition,
}

fn task_ids(examples: &[RankerExample]) -> Vec<&str> {
    examples
        .iter()
        .map(|e| e.task_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn count_for(frac: f64, tasks: usize) -> usize {
    (frac * tasks as f64).round() as usize
}

/// Splits by task: every candidate of a task lands in the same partition.
///
/// Task ids are sorted, then shuffled with `seed`. Validation takes the first
/// `round(val_frac * T)` eligible tasks, train the next `round(train_frac * T)`
/// of the rest, and test whatever remains.
pub fn build_dataset(
    examples: Vec<RankerExample>,
    spec: &SplitSpec,
) -> Result<DatasetSplit, DatasetError> {
    let in_unit = |f: f64| f > 0.0 && f < 1.0;
    if !in_unit(spec.train_frac) || !in_unit(spec.val_frac) {
        return Err(DatasetError::InvalidSplit(format!(
            "fractions must lie in (0, 1): train {}, val {}",
            spec.train_frac, spec.val_frac
        )));
    }
    if spec.train_frac + spec.val_frac > 1.0 + 1e-9 {
        return Err(DatasetError::InvalidSplit(format!(
            "train + val = {} exceeds 1",
            spec.train_frac + spec.val_frac
        )));
    }

    let solvable: HashSet<&str> = examples
        .iter()
        .filter(|e| e.labels.is_correct())
        .map(|e| e.task_id.as_str())
        .collect();
    let mut ids = task_ids(&examples);
    let total = ids.len();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));

    let n_train = count_for(spec.train_frac, total);
    let n_val = count_for(spec.val_frac, total).min(total.saturating_sub(n_train));
    if n_train == 0 {
        return Err(DatasetError::EmptyPartition { partition: "train" });
    }
    if n_val == 0 {
        return Err(DatasetError::EmptyPartition { partition: "val" });
    }

    let mut val_ids: BTreeSet<&str> = BTreeSet::new();
    for id in &ids {
        if val_ids.len() == n_val {
            break;
        }
        if !spec.require_solvable || solvable.contains(id) {
            val_ids.insert(id);
        }
    }
    if val_ids.is_empty() {
        return Err(DatasetError::EmptyPartition { partition: "val" });
    }
    let train_ids: BTreeSet<&str> = ids
        .iter()
        .filter(|id| !val_ids.contains(*id))
        .take(n_train)
        .copied()
        .collect();

    let assign = |id: &str| {
        if val_ids.contains(id) {
            1
        } else if train_ids.contains(id) {
            0
        } else {
            2
        }
    };
    let owned: Vec<u8> = examples.iter().map(|e| assign(&e.task_id)).collect();
    let mut parts: [Vec<RankerExample>; 3] = Default::default();
    for (ex, slot) in examples.into_iter().zip(owned) {
        parts[slot as usize].push(ex);
    }
    let [train, val, test] = parts;
    Ok(DatasetSplit {
        train: Partition::new(train),
        val: Partition::new(val),
        test: Partition::new(test),
    })
}

/// Mixes datasets. With `sample_frac == 1` this is plain concatenation;
/// otherwise each input contributes a uniform sample of `round(frac * T)`
/// of its tasks (at least one), keeping every candidate of a chosen task.
pub fn merge_datasets(
    inputs: &[Vec<RankerExample>],
    sample_frac: f64,
    seed: u64,
) -> Result<Vec<RankerExample>, DatasetError> {
    if !(sample_frac > 0.0 && sample_frac <= 1.0) {
        return Err(DatasetError::InvalidFraction(sample_frac));
    }
    let mut merged = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        if sample_frac >= 1.0 {
            merged.extend(input.iter().cloned());
            continue;
        }
        let mut ids = task_ids(input);
        if ids.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        ids.shuffle(&mut rng);
        let keep = count_for(sample_frac, ids.len()).max(1);
        let chosen: HashSet<&str> = ids.into_iter().take(keep).collect();
        merged.extend(input.iter().filter(|e| chosen.contains(e.task_id.as_str())).cloned());
    }
    Ok(merged)
}
