use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::{execute_candidate, Candidate, DriverCommand, ExecutionReport, HarnessError, Limits, Task};

/// Candidates per worker in one flushed batch.
const BATCH_PER_WORKER: usize = 2;

/// Orders candidates by `(task_id, candidate_id)`, the canonical report order.
pub fn sort_candidates(candidates: &mut [Candidate]) {
    candidates.sort_by(|a, b| {
        (a.task_id.as_str(), a.candidate_id.as_str())
            .cmp(&(b.task_id.as_str(), b.candidate_id.as_str()))
    });
}

/// Executes every candidate once on a pool of `workers` threads.
///
/// Reports come back, and are handed to `sink`, in `(task_id, candidate_id)`
/// order no matter how the pool schedules work. The sink sees each batch as
/// soon as it completes, so a crash loses at most the batch in flight.
pub fn execute_corpus<F>(
    driver: &DriverCommand,
    tasks: &[Task],
    candidates: &[Candidate],
    limits: &Limits,
    workers: usize,
    mut sink: F,
) -> Result<Vec<ExecutionReport>, HarnessError>
where
    F: FnMut(&ExecutionReport) -> std::io::Result<()>,
{
    if workers == 0 {
        return Err(HarnessError::InvalidLimits("workers must be at least 1".into()));
    }
    limits.validate()?;

    let mut by_id: HashMap<&str, &Task> = HashMap::with_capacity(tasks.len());
    for task in tasks {
        task.validate()?;
        if by_id.insert(task.task_id.as_str(), task).is_some() {
            return Err(HarnessError::DuplicateTask(task.task_id.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !by_id.contains_key(c.task_id.as_str()) {
            return Err(HarnessError::MissingTask {
                task_id: c.task_id.clone(),
                candidate_id: c.candidate_id.clone(),
            });
        }
        if !seen.insert((c.task_id.as_str(), c.candidate_id.as_str())) {
            return Err(HarnessError::DuplicateCandidate {
                task_id: c.task_id.clone(),
                candidate_id: c.candidate_id.clone(),
            });
        }
    }
    driver.check()?;

    let mut ordered: Vec<Candidate> = candidates.to_vec();
    sort_candidates(&mut ordered);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .thread_name(|i| format!("faultrank-exec-{i}"))
        .build()
        .map_err(|e| HarnessError::Io(std::io::Error::other(e)))?;

    let mut reports = Vec::with_capacity(ordered.len());
    for batch in ordered.chunks(workers * BATCH_PER_WORKER) {
        let outcomes: Vec<Result<ExecutionReport, HarnessError>> = pool.install(|| {
            batch
                .par_iter()
                .map(|c| execute_candidate(driver, by_id[c.task_id.as_str()], c, limits))
                .collect()
        });
        for outcome in outcomes {
            let report = outcome?;
            sink(&report).map_err(HarnessError::Sink)?;
            reports.push(report);
        }
    }
    Ok(reports)
}
