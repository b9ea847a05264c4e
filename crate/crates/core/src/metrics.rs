//! pass@k, exec@k, their ranked variants, and corpus evaluation that joins
//! ranker scores with execution reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{ExecutionReport, Outcome};
use crate::ranker::{compare_ranked, RankerTask, ScoreRecord};
use crate::taxonomy::{labels_for_report, ClassLabel, Exec12, Ternary};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("task {task_id}: {reason}")]
    MissingRank { task_id: String, reason: String },
    #[error("score for {task_id}/{candidate_id} has no matching report")]
    JoinError { task_id: String, candidate_id: String },
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `prod_{i=n-c+1}^{n} (1 - k/i)` as an exact reduced fraction, or `None`
/// if an intermediate value overflows.
fn miss_fraction(n: u64, c: u64, k: u64) -> Option<(u128, u128)> {
    let (mut num, mut den) = (1u128, 1u128);
    for i in (n - c + 1)..=n {
        num = num.checked_mul(u128::from(i - k))?;
        den = den.checked_mul(u128::from(i))?;
        let g = gcd(num, den);
        if g > 1 {
            num /= g;
            den /= g;
        }
    }
    Some((num, den))
}

fn estimator(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if c > n {
        return Err(MetricsError::DomainError(format!("c = {c} exceeds n = {n}")));
    }
    if k == 0 || k > n {
        return Err(MetricsError::DomainError(format!("k = {k} must lie in 1..={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    if c == 0 {
        return Ok(0.0);
    }
    if let Some((num, den)) = miss_fraction(n, c, k) {
        return Ok((den - num) as f64 / den as f64);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

/// Unbiased estimate of the chance that at least one of `k` samples drawn
/// without replacement from `n` (of which `c` are correct) is correct.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    estimator(n, c, k)
}

/// [`pass_at_k`] with the count of cleanly executing samples.
pub fn exec_at_k(n: u64, e: u64, k: u64) -> Result<f64, MetricsError> {
    estimator(n, e, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcomeSummary {
    pub task_id: String,
    pub n: u64,
    /// Correct candidates.
    pub c: u64,
    /// Candidates whose outcome is not an execution error.
    pub e: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranked: Option<Vec<String>>,
}

impl TaskOutcomeSummary {
    pub fn from_reports<'a>(task_id: &str, reports: impl IntoIterator<Item = &'a ExecutionReport>) -> Self {
        let (mut n, mut c, mut e) = (0, 0, 0);
        for r in reports {
            n += 1;
            c += u64::from(r.outcome == Outcome::Correct);
            e += u64::from(r.outcome != Outcome::ExecutionError);
        }
        Self {
            task_id: task_id.to_string(),
            n,
            c,
            e,
            ranked: None,
        }
    }

    fn top_k<'s>(
        &'s self,
        predicate: &'s BTreeMap<String, bool>,
        k: usize,
    ) -> Result<impl Iterator<Item = bool> + 's, MetricsError> {
        let missing = |reason: String| MetricsError::MissingRank {
            task_id: self.task_id.clone(),
            reason,
        };
        let order = self
            .ranked
            .as_ref()
            .ok_or_else(|| missing("no ranked order".into()))?;
        if order.len() as u64 != self.n {
            return Err(missing(format!("ranked order has {} of {} candidates", order.len(), self.n)));
        }
        if k == 0 || k > order.len() {
            return Err(MetricsError::DomainError(format!("k = {k} must lie in 1..={}", order.len())));
        }
        if let Some(id) = order.iter().find(|id| !predicate.contains_key(*id)) {
            return Err(missing(format!("candidate {id} has no outcome")));
        }
        Ok(order[..k].iter().map(move |id| predicate[id]))
    }
}

/// Whether any of the top `k` ranked candidates is correct.
pub fn ranked_pass_at_k(
    summary: &TaskOutcomeSummary,
    correct: &BTreeMap<String, bool>,
    k: usize,
) -> Result<bool, MetricsError> {
    Ok(summary.top_k(correct, k)?.any(|x| x))
}

/// Whether any of the top `k` ranked candidates executes cleanly.
pub fn ranked_exec_at_k(
    summary: &TaskOutcomeSummary,
    clean: &BTreeMap<String, bool>,
    k: usize,
) -> Result<bool, MetricsError> {
    Ok(summary.top_k(clean, k)?.any(|x| x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub pass: f64,
    pub exec: f64,
    pub ranked_pass: f64,
    pub ranked_exec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostics {
    pub task: RankerTask,
    /// Examples whose score record carried a predicted class.
    pub examples: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
    pub per_class_recall: BTreeMap<String, Option<f64>>,
    /// Fraction of line-head predictions where "predicted an execution
    /// error" agrees with "predicted a line other than 0".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_consistency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: usize,
    pub candidates: usize,
    /// Keyed by k.
    pub k: BTreeMap<usize, KMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ClassDiagnostics>,
}

impl EvalReport {
    /// Aligned plain-text table, one row per k.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tasks: {}  candidates: {}", self.tasks, self.candidates);
        let _ = writeln!(
            out,
            "{:>4}  {:>8}  {:>8}  {:>12}  {:>12}",
            "k", "pass", "exec", "ranked_pass", "ranked_exec"
        );
        for (k, m) in &self.k {
            let _ = writeln!(
                out,
                "{:>4}  {:>8.4}  {:>8.4}  {:>12.4}  {:>12.4}",
                k, m.pass, m.exec, m.ranked_pass, m.ranked_exec
            );
        }
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(out, "{} head accuracy: {:.4} over {} examples", d.task, d.accuracy, d.examples);
            if let Some(lc) = d.line_consistency {
                let _ = writeln!(out, "line/class consistency: {lc:.4}");
            }
        }
        out
    }
}

fn true_class(task: RankerTask, report: &ExecutionReport) -> &'static str {
    task.class_name(&labels_for_report(report, usize::MAX - 1))
}

fn predicts_exec_error(task: RankerTask, class: &str) -> bool {
    match task {
        RankerTask::Ternary => class == Ternary::ExecutionError.name(),
        RankerTask::Exec | RankerTask::ExecLine => {
            class != Exec12::Correct.name() && class != Exec12::IntentError.name()
        }
        RankerTask::Intent => class == "ExecutionError",
        RankerTask::Binary => false,
    }
}

fn diagnostics(
    task: RankerTask,
    scores: &[ScoreRecord],
    reports: &BTreeMap<(&str, &str), &ExecutionReport>,
) -> ClassDiagnostics {
    let classes = task.classes();
    let mut confusion: BTreeMap<String, BTreeMap<String, u64>> = classes
        .iter()
        .map(|t| (t.to_string(), classes.iter().map(|p| (p.to_string(), 0)).collect()))
        .collect();
    let (mut examples, mut hits) = (0usize, 0usize);
    let (mut line_seen, mut line_agree) = (0usize, 0usize);
    for s in scores {
        let Some(pred) = s.predicted_class.as_deref() else {
            continue;
        };
        let report = reports[&(s.task_id.as_str(), s.candidate_id.as_str())];
        let truth = true_class(task, report);
        examples += 1;
        hits += usize::from(truth == pred);
        *confusion
            .entry(truth.to_string())
            .or_default()
            .entry(pred.to_string())
            .or_insert(0) += 1;
        if let Some(line) = s.predicted_line {
            line_seen += 1;
            line_agree += usize::from(predicts_exec_error(task, pred) == (line != 0));
        }
    }
    let per_class_recall = confusion
        .iter()
        .map(|(t, row)| {
            let total: u64 = row.values().sum();
            let recall = (total > 0).then(|| row.get(t).copied().unwrap_or(0) as f64 / total as f64);
            (t.clone(), recall)
        })
        .collect();
    ClassDiagnostics {
        task,
        examples,
        accuracy: if examples == 0 { 0.0 } else { hits as f64 / examples as f64 },
        confusion,
        per_class_recall,
        line_consistency: (line_seen > 0).then(|| line_agree as f64 / line_seen as f64),
    }
}

/// Corpus means over tasks of every metric family at each k.
///
/// Tasks with fewer than `k` candidates are evaluated at `k = n`.
/// `task`, when given, names the head that produced `predicted_class` and
/// enables classification diagnostics.
pub fn evaluate_corpus(
    scores: &[ScoreRecord],
    reports: &[ExecutionReport],
    ks: &[usize],
    task: Option<RankerTask>,
) -> Result<EvalReport, MetricsError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(MetricsError::DomainError("k values must be positive".into()));
    }
    let mut by_id: BTreeMap<(&str, &str), &ExecutionReport> = BTreeMap::new();
    let mut by_task: BTreeMap<&str, Vec<&ExecutionReport>> = BTreeMap::new();
    for r in reports {
        if by_id.insert((&r.task_id, &r.candidate_id), r).is_some() {
            return Err(MetricsError::DomainError(format!(
                "duplicate report for {}/{}",
                r.task_id, r.candidate_id
            )));
        }
        by_task.entry(&r.task_id).or_default().push(r);
    }

    let mut scored: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for s in scores {
        if !by_id.contains_key(&(s.task_id.as_str(), s.candidate_id.as_str())) {
            return Err(MetricsError::JoinError {
                task_id: s.task_id.clone(),
                candidate_id: s.candidate_id.clone(),
            });
        }
        if !seen.insert((s.task_id.as_str(), s.candidate_id.as_str())) {
            return Err(MetricsError::DomainError(format!(
                "duplicate score for {}/{}",
                s.task_id, s.candidate_id
            )));
        }
        scored.entry(&s.task_id).or_default().push(s);
    }

    let mut sums: BTreeMap<usize, KMetrics> = ks
        .iter()
        .map(|&k| (k, KMetrics { pass: 0.0, exec: 0.0, ranked_pass: 0.0, ranked_exec: 0.0 }))
        .collect();
    for (task_id, task_reports) in &by_task {
        let mut summary = TaskOutcomeSummary::from_reports(task_id, task_reports.iter().copied());
        let mut records = scored.remove(task_id).unwrap_or_default();
        records.sort_by(|a, b| compare_ranked((a.score, &a.candidate_id), (b.score, &b.candidate_id)));
        summary.ranked = Some(records.iter().map(|r| r.candidate_id.clone()).collect());
        let correct: BTreeMap<String, bool> = task_reports
            .iter()
            .map(|r| (r.candidate_id.clone(), r.outcome == Outcome::Correct))
            .collect();
        let clean: BTreeMap<String, bool> = task_reports
            .iter()
            .map(|r| (r.candidate_id.clone(), r.outcome != Outcome::ExecutionError))
            .collect();
        for (&k, m) in sums.iter_mut() {
            let kk = k.min(summary.n as usize);
            m.pass += pass_at_k(summary.n, summary.c, kk as u64)?;
            m.exec += exec_at_k(summary.n, summary.e, kk as u64)?;
            m.ranked_pass += f64::from(u8::from(ranked_pass_at_k(&summary, &correct, kk)?));
            m.ranked_exec += f64::from(u8::from(ranked_exec_at_k(&summary, &clean, kk)?));
        }
    }
    let tasks = by_task.len();
    if tasks > 0 {
        let t = tasks as f64;
        for m in sums.values_mut() {
            m.pass /= t;
            m.exec /= t;
            m.ranked_pass /= t;
            m.ranked_exec /= t;
        }
    }
    Ok(EvalReport {
        tasks,
        candidates: reports.len(),
        k: sums,
        diagnostics: task.map(|t| diagnostics(t, scores, &by_id)),
    })
}
