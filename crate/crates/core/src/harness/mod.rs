//! Execution of candidate programs against their task's unit tests.
//!
//! Each candidate runs inside a fresh driver process (see [`protocol`] for the
//! wire format). The harness turns whatever the driver reports, or fails to
//! report, into an [`ExecutionReport`]. Candidate misbehavior is never an error
//! at this level: crashes, hangs and garbage output all become report content.

mod corpus;
mod exec;
pub mod protocol;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use corpus::{execute_corpus, sort_candidates};
pub use exec::{execute_candidate, DriverCommand, Limits, DEFAULT_TIMEOUT_S, KILL_GRACE_S};

/// How a task's unit tests feed the candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TestFormat {
    /// Call a named function with an argument tuple and compare the return value.
    #[default]
    #[serde(rename = "call_based")]
    CallBased,
    /// Feed a text blob on stdin and compare what the program prints.
    #[serde(rename = "stdin")]
    StdinStdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub prompt: String,
    pub test_format: TestFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_name: Option<String>,
    pub inputs: Vec<Value>,
    pub expected_outputs: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starter_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub task_id: String,
    pub candidate_id: String,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_logprob: Option<f64>,
    /// Name of the generator that sampled this candidate, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_model: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("task id is empty")]
    EmptyId,
    #[error("task {0}: needs at least one test")]
    NoTests(String),
    #[error("task {task_id}: {inputs} inputs but {outputs} expected outputs")]
    LengthMismatch {
        task_id: String,
        inputs: usize,
        outputs: usize,
    },
    #[error("task {0}: call-based tests require a function name")]
    MissingFunctionName(String),
    #[error("task {0}: stdin tests must not name a function")]
    UnexpectedFunctionName(String),
}

impl Task {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.task_id.is_empty() {
            return Err(TaskError::EmptyId);
        }
        if self.inputs.len() != self.expected_outputs.len() {
            return Err(TaskError::LengthMismatch {
                task_id: self.task_id.clone(),
                inputs: self.inputs.len(),
                outputs: self.expected_outputs.len(),
            });
        }
        if self.inputs.is_empty() {
            return Err(TaskError::NoTests(self.task_id.clone()));
        }
        match (self.test_format, &self.function_name) {
            (TestFormat::CallBased, None) => {
                Err(TaskError::MissingFunctionName(self.task_id.clone()))
            }
            (TestFormat::StdinStdout, Some(_)) => {
                Err(TaskError::UnexpectedFunctionName(self.task_id.clone()))
            }
            _ => Ok(()),
        }
    }

    pub fn num_tests(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    WrongOutput,
    ExecError,
    Timeout,
}

impl TestStatus {
    pub fn is_execution_fault(self) -> bool {
        matches!(self, TestStatus::ExecError | TestStatus::Timeout)
    }
}

/// Deserializes a field that may legitimately hold JSON `null` as `Some(Null)`,
/// keeping "absent" and "present but null" apart.
pub(crate) fn present<'de, D>(deserializer: D) -> Result<Option<Value>, D::Error>
where
    D: Deserializer<'de>,
{
    Value::deserialize(deserializer).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_index: usize,
    pub status: TestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exception_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_line: Option<i64>,
    #[serde(
        default,
        deserialize_with = "present",
        skip_serializing_if = "Option::is_none"
    )]
    pub produced_output: Option<Value>,
    pub expected_output: Value,
}

impl TestResult {
    pub fn pass(test_index: usize, produced: Value, expected: Value) -> Self {
        Self::with_output(test_index, TestStatus::Pass, produced, expected)
    }

    pub fn wrong_output(test_index: usize, produced: Value, expected: Value) -> Self {
        Self::with_output(test_index, TestStatus::WrongOutput, produced, expected)
    }

    fn with_output(test_index: usize, status: TestStatus, produced: Value, expected: Value) -> Self {
        Self {
            test_index,
            status,
            exception_type: None,
            exception_message: None,
            error_line: None,
            produced_output: Some(produced),
            expected_output: expected,
        }
    }

    pub fn fault(
        test_index: usize,
        status: TestStatus,
        exception_type: impl Into<String>,
        message: Option<String>,
        error_line: Option<i64>,
        expected: Value,
    ) -> Self {
        debug_assert!(status.is_execution_fault());
        Self {
            test_index,
            status,
            exception_type: Some(exception_type.into()),
            exception_message: message,
            error_line,
            produced_output: None,
            expected_output: expected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    IntentError,
    ExecutionError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub task_id: String,
    pub candidate_id: String,
    /// Format of the task the candidate ran against; labeling parses stdout
    /// text into lines of tokens for stdin tasks.
    #[serde(default)]
    pub test_format: TestFormat,
    pub outcome: Outcome,
    pub results: Vec<TestResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure_index: Option<usize>,
    /// Not serialized: report files must be byte-identical across runs, so
    /// timings are written to a separate sidecar.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

impl ExecutionReport {
    /// Aggregates per-test results. Execution faults dominate wrong outputs.
    pub fn from_results(
        task_id: impl Into<String>,
        candidate_id: impl Into<String>,
        test_format: TestFormat,
        results: Vec<TestResult>,
        wall_time_ms: u64,
    ) -> Self {
        let outcome = if results.iter().any(|r| r.status.is_execution_fault()) {
            Outcome::ExecutionError
        } else if results.iter().all(|r| r.status == TestStatus::Pass) {
            Outcome::Correct
        } else {
            Outcome::IntentError
        };
        let first_failure_index = results
            .iter()
            .filter(|r| r.status != TestStatus::Pass)
            .map(|r| r.test_index)
            .min();
        Self {
            task_id: task_id.into(),
            candidate_id: candidate_id.into(),
            test_format,
            outcome,
            results,
            first_failure_index,
            wall_time_ms,
        }
    }

    /// The test whose fault stands for the whole candidate: the lowest-index
    /// result in the dominant failure tier.
    pub fn representative(&self) -> Option<&TestResult> {
        let lowest = |pred: fn(&TestResult) -> bool| {
            self.results
                .iter()
                .filter(|r| pred(r))
                .min_by_key(|r| r.test_index)
        };
        match self.outcome {
            Outcome::Correct => None,
            Outcome::ExecutionError => lowest(|r| r.status.is_execution_fault()),
            Outcome::IntentError => lowest(|r| r.status == TestStatus::WrongOutput),
        }
    }

    /// A correct program necessarily executes cleanly.
    pub fn executes_cleanly(&self) -> bool {
        self.outcome != Outcome::ExecutionError
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("driver unavailable: {0}")]
    DriverUnavailable(String),
    #[error("candidate {candidate_id} references unknown task {task_id}")]
    MissingTask {
        task_id: String,
        candidate_id: String,
    },
    #[error("duplicate candidate {candidate_id} for task {task_id}")]
    DuplicateCandidate {
        task_id: String,
        candidate_id: String,
    },
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("candidate {candidate_id} belongs to task {candidate_task}, not {task_id}")]
    TaskMismatch {
        task_id: String,
        candidate_task: String,
        candidate_id: String,
    },
    #[error(transparent)]
    InvalidTask(#[from] TaskError),
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("report sink failed: {0}")]
    Sink(#[source] std::io::Error),
    #[error("io error talking to driver: {0}")]
    Io(#[from] std::io::Error),
}
