//! Class-weighted cross-entropy for the linear class head and the per-line
//! scoring head, with analytic gradients.

use std::borrow::Borrow;
use std::collections::BTreeMap;

/// Sparse model input row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub entries: Vec<(u32, f64)>,
}

impl SparseRow {
    pub fn new(entries: Vec<(u32, f64)>) -> Self {
        Self { entries }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| dense[i as usize] * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineTarget {
    pub rows: Vec<SparseRow>,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: SparseRow,
    pub class: usize,
    /// Per-class loss multiplier for this example's class.
    pub weight: f64,
    pub line: Option<LineTarget>,
}

/// Dense f64 working copy of the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `num_classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub line: Option<LineParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Params {
    pub fn zeros(num_classes: usize, dim: usize, line_head: bool) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            line: line_head.then(|| LineParams {
                weights: vec![0.0; dim],
                bias: 0.0,
            }),
        }
    }

    pub fn logits(&self, input: &SparseRow) -> Vec<f64> {
        (0..self.num_classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                input.dot(row) + self.bias[k]
            })
            .collect()
    }

    pub fn line_scores(&self, rows: &[SparseRow]) -> Option<Vec<f64>> {
        let line = self.line.as_ref()?;
        Some(rows.iter().map(|r| r.dot(&line.weights) + line.bias).collect())
    }

    pub fn apply(&mut self, grad: &Gradient, lr: f64) {
        for (&j, g) in &grad.weights {
            for (k, gk) in g.iter().enumerate() {
                self.weights[k * self.dim + j as usize] -= lr * gk;
            }
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
        if let Some(line) = self.line.as_mut() {
            for (&j, g) in &grad.line_weights {
                line.weights[j as usize] -= lr * g;
            }
            line.bias -= lr * grad.line_bias;
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits[target] - lse
}

/// Sparse gradient, keyed by feature index in ascending order so updates
/// apply in a fixed order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradient {
    pub weights: BTreeMap<u32, Vec<f64>>,
    pub bias: Vec<f64>,
    pub line_weights: BTreeMap<u32, f64>,
    pub line_bias: f64,
}

/// Mean over the batch of `weight * CE(class head)` plus
/// `line_weight * CE(line head)`.
pub fn loss<E: Borrow<TrainingExample>>(params: &Params, batch: &[E], line_weight: f64) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for ex in batch {
        let ex = ex.borrow();
        total -= ex.weight * log_softmax_at(&params.logits(&ex.input), ex.class);
        if let (Some(line), Some(scores)) = (
            ex.line.as_ref(),
            ex.line.as_ref().and_then(|l| params.line_scores(&l.rows)),
        ) {
            total -= line_weight * log_softmax_at(&scores, line.target);
        }
    }
    total / batch.len() as f64
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_and_gradient<E: Borrow<TrainingExample>>(
    params: &Params,
    batch: &[E],
    line_weight: f64,
) -> (f64, Gradient) {
    let mut grad = Gradient {
        bias: vec![0.0; params.num_classes],
        ..Default::default()
    };
    if batch.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;

    for ex in batch {
        let ex = ex.borrow();
        let logits = params.logits(&ex.input);
        total -= ex.weight * log_softmax_at(&logits, ex.class);
        let mut delta = softmax(&logits);
        delta[ex.class] -= 1.0;
        for d in delta.iter_mut() {
            *d *= ex.weight * scale;
        }
        for (b, d) in grad.bias.iter_mut().zip(&delta) {
            *b += d;
        }
        for &(j, v) in &ex.input.entries {
            let slot = grad
                .weights
                .entry(j)
                .or_insert_with(|| vec![0.0; params.num_classes]);
            for (s, d) in slot.iter_mut().zip(&delta) {
                *s += d * v;
            }
        }

        if let (Some(line), Some(scores)) = (
            ex.line.as_ref(),
            ex.line.as_ref().and_then(|l| params.line_scores(&l.rows)),
        ) {
            total -= line_weight * log_softmax_at(&scores, line.target);
            let mut delta = softmax(&scores);
            delta[line.target] -= 1.0;
            for (row, d) in line.rows.iter().zip(&delta) {
                let d = d * line_weight * scale;
                grad.line_bias += d;
                for &(j, v) in &row.entries {
                    *grad.line_weights.entry(j).or_insert(0.0) += d * v;
                }
            }
        }
    }
    (total * scale, grad)
}
