//! Mini-batch gradient descent over the class head and the optional line
//! head, with best-epoch selection on validation ranked pass@1.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{featurize, featurize_lines, FeatureConfig};
use super::objective::{loss, loss_and_gradient, LineTarget, Params, TrainingExample};
use super::{compare_ranked, line_rows, model_input, RankerError, RankerModel, RankerTask, TrainingMeta, CORRECT_CLASS};
use crate::dataset::{class_weight_vector, ClassStats, RankerExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub line_loss_weight: f64,
    /// Overrides the inverse-frequency weights computed from the train split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 512,
            learning_rate: 1e-4,
            seed: 0,
            line_loss_weight: 1.0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, task: RankerTask) -> Result<(), RankerError> {
        let bad = |msg: String| Err(RankerError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.line_loss_weight.is_finite() && self.line_loss_weight >= 0.0) {
            return bad(format!("line loss weight must be >= 0, got {}", self.line_loss_weight));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != task.num_classes() {
                return bad(format!(
                    "{} class weights given, task {task} has {} classes",
                    w.len(),
                    task.num_classes()
                ));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad("class weights must be finite and non-negative".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_ranked_pass1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: RankerModel,
    pub history: Vec<EpochStats>,
    /// Classes with no training examples; they get weight 0.
    pub absent_classes: Vec<String>,
}

fn check_labels(examples: &[RankerExample]) -> Result<(), RankerError> {
    for ex in examples {
        if let Err(e) = ex.labels.check() {
            return Err(RankerError::LabelMismatch {
                task_id: ex.task_id.clone(),
                candidate_id: ex.candidate_id.clone(),
                reason: e.to_string(),
            });
        }
    }
    Ok(())
}

fn encode(
    examples: &[RankerExample],
    task: RankerTask,
    features: &FeatureConfig,
    weights: &[f64],
) -> Vec<TrainingExample> {
    examples
        .par_iter()
        .map(|ex| {
            let class = task.class_index(&ex.labels);
            let input = model_input(&featurize(&ex.prompt, &ex.code, features), features);
            let line = task.has_line_head().then(|| {
                let lines = featurize_lines(&ex.prompt, &ex.code, features);
                LineTarget {
                    rows: line_rows(&lines, features),
                    target: lines.target(ex.labels.line_class),
                }
            });
            TrainingExample {
                input,
                class,
                weight: weights[class],
                line,
            }
        })
        .collect()
}

/// Fraction of validation tasks whose top-scored candidate is correct.
fn ranked_pass1(params: &Params, examples: &[RankerExample], encoded: &[TrainingExample]) -> f64 {
    let mut best: BTreeMap<&str, (f64, &str, bool)> = BTreeMap::new();
    for (ex, enc) in examples.iter().zip(encoded) {
        let s = params.logits(&enc.input)[CORRECT_CLASS];
        let entry = (s, ex.candidate_id.as_str(), ex.labels.is_correct());
        best.entry(ex.task_id.as_str())
            .and_modify(|cur| {
                if compare_ranked((entry.0, entry.1), (cur.0, cur.1)).is_lt() {
                    *cur = entry;
                }
            })
            .or_insert(entry);
    }
    if best.is_empty() {
        return 0.0;
    }
    best.values().filter(|v| v.2).count() as f64 / best.len() as f64
}

/// Rounds a working copy through f32 so validation sees the weights that
/// would be saved.
fn snapshot(params: &Params) -> Params {
    let round = |v: &[f64]| v.iter().map(|&x| f64::from(x as f32)).collect::<Vec<_>>();
    let mut p = params.clone();
    p.weights = round(&p.weights);
    p.bias = round(&p.bias);
    if let Some(l) = p.line.as_mut() {
        l.weights = round(&l.weights);
        l.bias = f64::from(l.bias as f32);
    }
    p
}

/// Trains a ranker for `task` and returns the weights of the epoch with the
/// best validation ranked pass@1 (ties go to the lower validation loss, then
/// the earlier epoch).
pub fn train(
    train: &[RankerExample],
    val: &[RankerExample],
    task: RankerTask,
    features: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, RankerError> {
    cfg.validate(task)?;
    features
        .validate()
        .map_err(|e| RankerError::InvalidConfig(e.to_string()))?;
    if train.is_empty() {
        return Err(RankerError::DegenerateDataset("train partition is empty".into()));
    }
    if val.is_empty() {
        return Err(RankerError::DegenerateDataset("validation partition is empty".into()));
    }
    check_labels(train)?;
    check_labels(val)?;

    let stats = ClassStats::from_examples(train);
    let class_weights = cfg
        .class_weights
        .clone()
        .unwrap_or_else(|| class_weight_vector(&stats, task));
    let counts = stats.counts_for(task);
    let absent_classes: Vec<String> = task
        .classes()
        .into_iter()
        .filter(|c| counts.get(*c).copied().unwrap_or(0) == 0)
        .map(String::from)
        .collect();
    if !absent_classes.is_empty() {
        warn!(
            "classes absent from the train split (weight 0): {}",
            absent_classes.join(", ")
        );
    }
    if absent_classes.len() + 1 >= task.num_classes() {
        warn!("train split holds a single {task} class; the ranker cannot separate candidates");
    }

    let train_enc = encode(train, task, features, &class_weights);
    let val_enc = encode(val, task, features, &class_weights);

    let mut params = Params::zeros(task.num_classes(), features.dim, task.has_line_head());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, Params)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &train_enc[i]).collect();
            let (l, grad) = loss_and_gradient(&params, &batch, cfg.line_loss_weight);
            weighted_loss += l * batch.len() as f64;
            params.apply(&grad, cfg.learning_rate);
        }
        let train_loss = weighted_loss / train_enc.len() as f64;

        let snap = snapshot(&params);
        let val_loss = loss(&snap, &val_enc, cfg.line_loss_weight);
        let val_ranked_pass1 = ranked_pass1(&snap, val, &val_enc);
        info!(
            "epoch {epoch}: train loss {train_loss:.6}, val loss {val_loss:.6}, val ranked pass@1 {val_ranked_pass1:.4}"
        );
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_ranked_pass1,
        });
        let better = match &best {
            None => true,
            Some((p1, vl, _, _)) => {
                val_ranked_pass1 > *p1 || (val_ranked_pass1 == *p1 && val_loss < *vl)
            }
        };
        if better {
            best = Some((val_ranked_pass1, val_loss, epoch, snap));
        }
    }

    let (_, _, best_epoch, best_params) = best.expect("at least one epoch ran");
    let meta = TrainingMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        line_loss_weight: cfg.line_loss_weight,
        best_epoch,
        class_weights,
    };
    let model = RankerModel::from_params(task, *features, &best_params, Some(meta));
    model.validate()?;
    Ok(TrainOutcome {
        model,
        history,
        absent_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{ExecErrorClass, FaultLabelSet, IntentErrorClass};

    fn cfg() -> FeatureConfig {
        FeatureConfig {
            dim: 1024,
            max_tokens: 64,
            ngram: 1,
            normalize: true,
        }
    }

    fn ex(task: usize, cand: usize, code: &str, labels: FaultLabelSet) -> RankerExample {
        RankerExample {
            task_id: format!("t{task}"),
            candidate_id: format!("c{cand}"),
            prompt: "p".into(),
            code: code.into(),
            labels,
            source_model: "m".into(),
            gen_logprob: None,
            report: None,
        }
    }

    #[test]
    fn rejects_bad_config() {
        let data = vec![ex(0, 0, "x", FaultLabelSet::CORRECT)];
        let c = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            train(&data, &data, RankerTask::Binary, &cfg(), &c),
            Err(RankerError::InvalidConfig(_))
        ));
        assert!(matches!(
            train(&data, &[], RankerTask::Binary, &cfg(), &TrainConfig::default()),
            Err(RankerError::DegenerateDataset(_))
        ));
    }

    #[test]
    fn inconsistent_labels_are_rejected() {
        let mut bad = FaultLabelSet::intent(IntentErrorClass::Misc);
        bad.line_class = 2;
        let data = vec![ex(0, 0, "x", FaultLabelSet::CORRECT), ex(0, 1, "y", bad)];
        let err = train(&data, &data, RankerTask::Ternary, &cfg(), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, RankerError::LabelMismatch { ref candidate_id, .. } if candidate_id == "c1"));
    }

    #[test]
    fn absent_classes_are_reported() {
        let data = vec![
            ex(0, 0, "ok", FaultLabelSet::CORRECT),
            ex(0, 1, "boom", FaultLabelSet::execution(ExecErrorClass::TypeError, 1)),
        ];
        let out = train(&data, &data, RankerTask::Ternary, &cfg(), &TrainConfig {
            epochs: 2,
            learning_rate: 0.1,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(out.absent_classes, vec!["IntentError".to_string()]);
        let w = &out.model.training.as_ref().unwrap().class_weights;
        let intent = RankerTask::Ternary.classes().iter().position(|c| *c == "IntentError").unwrap();
        assert_eq!(w[intent], 0.0);
        assert!(w.iter().enumerate().all(|(i, x)| i == intent || *x > 0.0));
        assert_eq!(out.history.len(), 2);
    }
}
