//! JSON protocol spoken with the in-interpreter test driver.
//!
//! The harness writes one [`DriverRequest`] document to the driver's stdin and
//! expects one [`DriverReport`] line on its stdout. Non-finite floats produced
//! by a candidate travel as `{"$float": "inf" | "-inf" | "nan"}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{present, Candidate, Task, TestFormat, TestResult, TestStatus};

/// Exception type reported when a driver's reply cannot be used.
pub const PROTOCOL_ERROR_TYPE: &str = "ProtocolError";
/// Exception type synthesized for tests that ran out of time.
pub const TIMEOUT_TYPE: &str = "TimeoutException";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverRequest {
    pub code: String,
    pub test_format: TestFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_name: Option<String>,
    pub inputs: Vec<Value>,
    pub expected_outputs: Vec<Value>,
    pub timeout_s: f64,
}

impl DriverRequest {
    pub fn new(task: &Task, candidate: &Candidate, timeout_s: f64) -> Self {
        Self {
            code: candidate.code.clone(),
            test_format: task.test_format,
            function_name: task.function_name.clone(),
            inputs: task.inputs.clone(),
            expected_outputs: task.expected_outputs.clone(),
            timeout_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverTestEntry {
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverReport {
    pub per_test: Vec<DriverTestEntry>,
    pub compile_ok: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("driver produced no output")]
    Empty,
    #[error("driver output is not a report: {0}")]
    Malformed(String),
    #[error("driver reported {got} tests, expected {expected}")]
    WrongCount { got: usize, expected: usize },
    #[error("test {index}: {reason}")]
    InvalidEntry { index: usize, reason: &'static str },
}

/// Parses the driver's stdout. Candidates may leak stray prints, so the last
/// non-blank line is taken as the report.
pub fn parse_report(stdout: &[u8]) -> Result<DriverReport, ProtocolError> {
    let text = String::from_utf8_lossy(stdout);
    let line = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or(ProtocolError::Empty)?;
    serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// Expands a driver report into one [`TestResult`] per task test.
pub fn into_results(report: DriverReport, task: &Task) -> Result<Vec<TestResult>, ProtocolError> {
    let n = task.num_tests();
    let entries = if report.compile_ok {
        if report.per_test.len() != n {
            return Err(ProtocolError::WrongCount {
                got: report.per_test.len(),
                expected: n,
            });
        }
        report.per_test
    } else {
        // One synthetic entry applies to every test.
        if report.per_test.len() != 1 {
            return Err(ProtocolError::WrongCount {
                got: report.per_test.len(),
                expected: 1,
            });
        }
        let entry = report.per_test.into_iter().next().unwrap();
        if !entry.status.is_execution_fault() {
            return Err(ProtocolError::InvalidEntry {
                index: 0,
                reason: "compile failure must be an execution fault",
            });
        }
        vec![entry; n]
    };

    entries
        .into_iter()
        .zip(&task.expected_outputs)
        .enumerate()
        .map(|(index, (entry, expected))| entry_to_result(index, entry, expected.clone()))
        .collect()
}

fn entry_to_result(
    index: usize,
    entry: DriverTestEntry,
    expected: Value,
) -> Result<TestResult, ProtocolError> {
    if entry.status.is_execution_fault() {
        let exception_type = match entry.exception_type {
            Some(t) if !t.is_empty() => t,
            _ if entry.status == TestStatus::Timeout => TIMEOUT_TYPE.to_string(),
            _ => {
                return Err(ProtocolError::InvalidEntry {
                    index,
                    reason: "execution fault without exception type",
                })
            }
        };
        Ok(TestResult::fault(
            index,
            entry.status,
            exception_type,
            entry.exception_message,
            entry.error_line,
            expected,
        ))
    } else {
        let produced = entry.produced_output.ok_or(ProtocolError::InvalidEntry {
            index,
            reason: "missing produced_output",
        })?;
        Ok(TestResult {
            test_index: index,
            status: entry.status,
            exception_type: None,
            exception_message: None,
            error_line: None,
            produced_output: Some(produced),
            expected_output: expected,
        })
    }
}

/// Results used when nothing trustworthy came back from the driver: every test
/// becomes the same execution fault.
pub fn uniform_fault(
    task: &Task,
    status: TestStatus,
    exception_type: &str,
    message: Option<String>,
) -> Vec<TestResult> {
    task.expected_outputs
        .iter()
        .enumerate()
        .map(|(i, expected)| {
            TestResult::fault(i, status, exception_type, message.clone(), None, expected.clone())
        })
        .collect()
}
