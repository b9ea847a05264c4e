//! Ranker weight bundle and its on-disk format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"FRNK" | u32 format version | u32 header length | header JSON | f32 weights
//! ```
//!
//! The weight block holds the class head (`K x D`, row-major), its `K` biases,
//! and for the line head its `D` weights followed by one bias.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, HASH_SPEC};
use super::objective::{LineParams, Params};
use super::{RankerError, RankerTask};

pub const MODEL_MAGIC: &[u8; 4] = b"FRNK";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub line_loss_weight: f64,
    pub best_epoch: usize,
    pub class_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineHead {
    pub weights: Vec<f32>,
    pub bias: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankerModel {
    pub version: u32,
    pub task: RankerTask,
    pub features: FeatureConfig,
    pub classes: Vec<String>,
    /// Row-major `classes.len() x features.dim`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub line_head: Option<LineHead>,
    pub training: Option<TrainingMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    task: RankerTask,
    dim: usize,
    max_tokens: usize,
    ngram: usize,
    normalize: bool,
    hash: String,
    classes: Vec<String>,
    line_head: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingMeta>,
}

impl RankerModel {
    pub fn from_params(
        task: RankerTask,
        features: FeatureConfig,
        params: &Params,
        training: Option<TrainingMeta>,
    ) -> Self {
        Self {
            version: MODEL_VERSION,
            task,
            features,
            classes: task.classes().into_iter().map(String::from).collect(),
            weights: params.weights.iter().map(|&w| w as f32).collect(),
            bias: params.bias.iter().map(|&b| b as f32).collect(),
            line_head: params.line.as_ref().map(|l| LineHead {
                weights: l.weights.iter().map(|&w| w as f32).collect(),
                bias: l.bias as f32,
            }),
            training,
        }
    }

    pub fn to_params(&self) -> Params {
        Params {
            num_classes: self.classes.len(),
            dim: self.features.dim,
            weights: self.weights.iter().map(|&w| f64::from(w)).collect(),
            bias: self.bias.iter().map(|&b| f64::from(b)).collect(),
            line: self.line_head.as_ref().map(|l| LineParams {
                weights: l.weights.iter().map(|&w| f64::from(w)).collect(),
                bias: f64::from(l.bias),
            }),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn check_version(&self) -> Result<(), RankerError> {
        if self.version != MODEL_VERSION {
            return Err(RankerError::VersionMismatch {
                expected: MODEL_VERSION,
                found: self.version,
            });
        }
        Ok(())
    }

    /// Checks the shape invariants and that all weights are finite.
    pub fn validate(&self) -> Result<(), RankerError> {
        let k = self.task.num_classes();
        let d = self.features.dim;
        let expected: Vec<&str> = self.task.classes();
        let shape_ok = self.classes.iter().map(String::as_str).eq(expected)
            && self.weights.len() == k * d
            && self.bias.len() == k
            && self.line_head.is_some() == self.task.has_line_head()
            && self.line_head.as_ref().is_none_or(|l| l.weights.len() == d);
        if !shape_ok {
            return Err(RankerError::CorruptFile("weight shapes do not match the task".into()));
        }
        let finite = self.weights.iter().chain(&self.bias).all(|w| w.is_finite())
            && self
                .line_head
                .as_ref()
                .is_none_or(|l| l.bias.is_finite() && l.weights.iter().all(|w| w.is_finite()));
        if !finite {
            return Err(RankerError::CorruptFile("non-finite weights".into()));
        }
        Ok(())
    }

    fn header(&self) -> Header {
        Header {
            version: self.version,
            task: self.task,
            dim: self.features.dim,
            max_tokens: self.features.max_tokens,
            ngram: self.features.ngram,
            normalize: self.features.normalize,
            hash: HASH_SPEC.to_string(),
            classes: self.classes.clone(),
            line_head: self.line_head.is_some(),
            training: self.training.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let floats = self.weights.len()
            + self.bias.len()
            + self.line_head.as_ref().map_or(0, |l| l.weights.len() + 1);
        let mut out = Vec::with_capacity(12 + header.len() + 4 * floats);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let mut push = |w: f32| out.extend_from_slice(&w.to_le_bytes());
        self.weights.iter().copied().for_each(&mut push);
        self.bias.iter().copied().for_each(&mut push);
        if let Some(line) = &self.line_head {
            line.weights.iter().copied().for_each(&mut push);
            push(line.bias);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RankerError> {
        let corrupt = |msg: &str| RankerError::CorruptFile(msg.to_string());
        if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
            return Err(corrupt("missing FRNK magic"));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != MODEL_VERSION {
            return Err(RankerError::VersionMismatch {
                expected: MODEL_VERSION,
                found: version,
            });
        }
        let header_len = word(8) as usize;
        let body = &bytes[12..];
        if body.len() < header_len {
            return Err(corrupt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..header_len])
            .map_err(|e| RankerError::CorruptFile(format!("bad header: {e}")))?;
        if header.version != MODEL_VERSION {
            return Err(RankerError::VersionMismatch {
                expected: MODEL_VERSION,
                found: header.version,
            });
        }
        if header.hash != HASH_SPEC {
            return Err(RankerError::CorruptFile(format!(
                "unsupported feature hash {:?}",
                header.hash
            )));
        }
        let features = FeatureConfig {
            dim: header.dim,
            max_tokens: header.max_tokens,
            ngram: header.ngram,
            normalize: header.normalize,
        };
        features
            .validate()
            .map_err(|e| RankerError::CorruptFile(e.to_string()))?;

        let k = header.classes.len();
        let d = header.dim;
        let line_len = if header.line_head { d + 1 } else { 0 };
        let expected_floats = k
            .checked_mul(d)
            .and_then(|kd| kd.checked_add(k + line_len))
            .ok_or_else(|| corrupt("weight block size overflows"))?;
        let block = &body[header_len..];
        if block.len() != expected_floats * 4 {
            return Err(RankerError::CorruptFile(format!(
                "weight block has {} bytes, expected {}",
                block.len(),
                expected_floats * 4
            )));
        }
        let mut floats = block
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let weights: Vec<f32> = floats.by_ref().take(k * d).collect();
        let bias: Vec<f32> = floats.by_ref().take(k).collect();
        let line_head = header.line_head.then(|| LineHead {
            weights: floats.by_ref().take(d).collect(),
            bias: floats.next().unwrap(),
        });

        let model = Self {
            version,
            task: header.task,
            features,
            classes: header.classes,
            weights,
            bias,
            line_head,
            training: header.training,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &RankerModel, path: &Path) -> Result<(), RankerError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&model.to_bytes())?;
    file.sync_all()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RankerModel, RankerError> {
    RankerModel::from_bytes(&fs::read(path)?)
}
