//! Fault taxonomy: turns an [`ExecutionReport`] into the five-task label
//! vector used to train fault-aware rankers.

mod intent;
pub mod value;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::harness::{Candidate, ExecutionReport, Outcome, TestFormat};

pub use intent::{classify_intent_error, INT_SMALL_DELTA, STRING_SMALL_DELTA};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("produced output equals the expected output; not an intent error")]
    ContractViolation,
    #[error("unknown class label {0:?}")]
    UnknownLabel(String),
}

/// A closed set of class names with a fixed order (the head's class index).
pub trait ClassLabel: Sized + Copy + PartialEq + 'static {
    const ALL: &'static [Self];

    fn name(self) -> &'static str;

    fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("label in ALL")
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }

    fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|c| c.name()).collect()
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let name = String::deserialize(d)?;
                <$ty>::from_name(&name)
                    .ok_or_else(|| serde::de::Error::custom(TaxonomyError::UnknownLabel(name)))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecErrorClass {
    NameError,
    ValueError,
    EOFError,
    TypeError,
    IndexError,
    KeyError,
    TimeoutException,
    SyntaxError,
    FunctionNotFound,
    Misc,
}

impl ClassLabel for ExecErrorClass {
    const ALL: &'static [Self] = &[
        Self::NameError,
        Self::ValueError,
        Self::EOFError,
        Self::TypeError,
        Self::IndexError,
        Self::KeyError,
        Self::TimeoutException,
        Self::SyntaxError,
        Self::FunctionNotFound,
        Self::Misc,
    ];

    fn name(self) -> &'static str {
        match self {
            Self::NameError => "NameError",
            Self::ValueError => "ValueError",
            Self::EOFError => "EOFError",
            Self::TypeError => "TypeError",
            Self::IndexError => "IndexError",
            Self::KeyError => "KeyError",
            Self::TimeoutException => "TimeoutException",
            Self::SyntaxError => "SyntaxError",
            Self::FunctionNotFound => "FunctionNotFound",
            Self::Misc => "Misc",
        }
    }
}
string_serde!(ExecErrorClass);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntentErrorClass {
    NoneError,
    EmptyError,
    OutputTypeError,
    LengthError,
    IntSmallError,
    IntLargeError,
    StringSmallError,
    StringLargeError,
    Misc,
}

impl ClassLabel for IntentErrorClass {
    const ALL: &'static [Self] = &[
        Self::NoneError,
        Self::EmptyError,
        Self::OutputTypeError,
        Self::LengthError,
        Self::IntSmallError,
        Self::IntLargeError,
        Self::StringSmallError,
        Self::StringLargeError,
        Self::Misc,
    ];

    fn name(self) -> &'static str {
        match self {
            Self::NoneError => "NoneError",
            Self::EmptyError => "EmptyError",
            Self::OutputTypeError => "OutputTypeError",
            Self::LengthError => "LengthError",
            Self::IntSmallError => "IntSmallError",
            Self::IntLargeError => "IntLargeError",
            Self::StringSmallError => "StringSmallError",
            Self::StringLargeError => "StringLargeError",
            Self::Misc => "Misc",
        }
    }
}
string_serde!(IntentErrorClass);

/// Maps an interpreter exception class name onto the execution-error classes.
/// Exact names only: `UnboundLocalError` is `Misc` even though the interpreter
/// derives it from `NameError`. Indentation errors are syntax errors.
pub fn classify_execution_error(exception_type: &str) -> ExecErrorClass {
    match exception_type.trim() {
        "NameError" => ExecErrorClass::NameError,
        "ValueError" => ExecErrorClass::ValueError,
        "EOFError" => ExecErrorClass::EOFError,
        "TypeError" => ExecErrorClass::TypeError,
        "IndexError" => ExecErrorClass::IndexError,
        "KeyError" => ExecErrorClass::KeyError,
        "TimeoutException" => ExecErrorClass::TimeoutException,
        "SyntaxError" | "IndentationError" | "TabError" => ExecErrorClass::SyntaxError,
        "FunctionNotFound" => ExecErrorClass::FunctionNotFound,
        _ => ExecErrorClass::Misc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Binary {
    Correct,
    Wrong,
}

impl ClassLabel for Binary {
    const ALL: &'static [Self] = &[Self::Correct, Self::Wrong];

    fn name(self) -> &'static str {
        match self {
            Self::Correct => "Correct",
            Self::Wrong => "Wrong",
        }
    }
}
string_serde!(Binary);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ternary {
    Correct,
    IntentError,
    ExecutionError,
}

impl ClassLabel for Ternary {
    const ALL: &'static [Self] = &[Self::Correct, Self::IntentError, Self::ExecutionError];

    fn name(self) -> &'static str {
        match self {
            Self::Correct => "Correct",
            Self::IntentError => "IntentError",
            Self::ExecutionError => "ExecutionError",
        }
    }
}
string_serde!(Ternary);

/// Intent-aware label: intent errors split into their classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intent11 {
    Correct,
    ExecutionError,
    Intent(IntentErrorClass),
}

impl ClassLabel for Intent11 {
    const ALL: &'static [Self] = &[
        Self::Correct,
        Self::ExecutionError,
        Self::Intent(IntentErrorClass::NoneError),
        Self::Intent(IntentErrorClass::EmptyError),
        Self::Intent(IntentErrorClass::OutputTypeError),
        Self::Intent(IntentErrorClass::LengthError),
        Self::Intent(IntentErrorClass::IntSmallError),
        Self::Intent(IntentErrorClass::IntLargeError),
        Self::Intent(IntentErrorClass::StringSmallError),
        Self::Intent(IntentErrorClass::StringLargeError),
        Self::Intent(IntentErrorClass::Misc),
    ];

    fn name(self) -> &'static str {
        match self {
            Self::Correct => "Correct",
            Self::ExecutionError => "ExecutionError",
            Self::Intent(c) => c.name(),
        }
    }
}
string_serde!(Intent11);

/// Execution-aware label: execution errors split into their classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exec12 {
    Correct,
    IntentError,
    Exec(ExecErrorClass),
}

impl ClassLabel for Exec12 {
    const ALL: &'static [Self] = &[
        Self::Correct,
        Self::IntentError,
        Self::Exec(ExecErrorClass::NameError),
        Self::Exec(ExecErrorClass::ValueError),
        Self::Exec(ExecErrorClass::EOFError),
        Self::Exec(ExecErrorClass::TypeError),
        Self::Exec(ExecErrorClass::IndexError),
        Self::Exec(ExecErrorClass::KeyError),
        Self::Exec(ExecErrorClass::TimeoutException),
        Self::Exec(ExecErrorClass::SyntaxError),
        Self::Exec(ExecErrorClass::FunctionNotFound),
        Self::Exec(ExecErrorClass::Misc),
    ];

    fn name(self) -> &'static str {
        match self {
            Self::Correct => "Correct",
            Self::IntentError => "IntentError",
            Self::Exec(c) => c.name(),
        }
    }
}
string_serde!(Exec12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultLabelSet {
    pub binary: Binary,
    pub ternary: Ternary,
    pub intent11: Intent11,
    pub exec12: Exec12,
    /// 0: no execution error; 1..=m: faulty line; m+1: beyond the encoded lines.
    pub line_class: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("inconsistent labels: {0}")]
pub struct InconsistentLabels(pub &'static str);

impl FaultLabelSet {
    pub const CORRECT: Self = Self {
        binary: Binary::Correct,
        ternary: Ternary::Correct,
        intent11: Intent11::Correct,
        exec12: Exec12::Correct,
        line_class: 0,
    };

    pub fn intent(class: IntentErrorClass) -> Self {
        Self {
            binary: Binary::Wrong,
            ternary: Ternary::IntentError,
            intent11: Intent11::Intent(class),
            exec12: Exec12::IntentError,
            line_class: 0,
        }
    }

    /// `line_class` must be at least 1.
    pub fn execution(class: ExecErrorClass, line_class: usize) -> Self {
        Self {
            binary: Binary::Wrong,
            ternary: Ternary::ExecutionError,
            intent11: Intent11::ExecutionError,
            exec12: Exec12::Exec(class),
            line_class,
        }
    }

    pub fn is_correct(&self) -> bool {
        self.binary == Binary::Correct
    }

    /// Checks the agreement rules between the five labels.
    pub fn check(&self) -> Result<(), InconsistentLabels> {
        if (self.binary == Binary::Correct) != (self.ternary == Ternary::Correct) {
            return Err(InconsistentLabels("binary disagrees with ternary"));
        }
        let intent_fine = matches!(self.intent11, Intent11::Intent(_));
        if intent_fine != (self.ternary == Ternary::IntentError) {
            return Err(InconsistentLabels("intent label disagrees with ternary"));
        }
        if (self.intent11 == Intent11::Correct) != (self.ternary == Ternary::Correct) {
            return Err(InconsistentLabels("intent label disagrees with ternary"));
        }
        let exec_fine = matches!(self.exec12, Exec12::Exec(_));
        if exec_fine != (self.ternary == Ternary::ExecutionError) {
            return Err(InconsistentLabels("execution label disagrees with ternary"));
        }
        if (self.exec12 == Exec12::Correct) != (self.ternary == Ternary::Correct) {
            return Err(InconsistentLabels("execution label disagrees with ternary"));
        }
        if (self.line_class == 0) != (self.ternary != Ternary::ExecutionError) {
            return Err(InconsistentLabels("line class disagrees with ternary"));
        }
        Ok(())
    }
}

/// Line class for an execution fault at `error_line` when `max_lines` lines
/// are encoded. Unattributable faults go to line 1.
pub fn line_class_for(error_line: Option<i64>, max_lines: usize) -> usize {
    match error_line {
        Some(line) if line >= 1 => {
            let line = line as u64;
            if line <= max_lines as u64 {
                line as usize
            } else {
                max_lines + 1
            }
        }
        _ => 1,
    }
}

/// Number of source lines in a candidate, as the line head counts them.
pub fn count_lines(code: &str) -> usize {
    code.lines().count()
}

/// Derives the label vector for one executed candidate.
///
/// The representative test (lowest index in the dominant failure tier)
/// supplies the fine-grained class and the error line.
pub fn label_report(
    report: &ExecutionReport,
    candidate: &Candidate,
    max_lines: usize,
) -> FaultLabelSet {
    debug_assert_eq!(report.candidate_id, candidate.candidate_id);
    labels_for_report(report, max_lines)
}

/// [`label_report`] without the candidate, for callers that only hold reports.
pub fn labels_for_report(report: &ExecutionReport, max_lines: usize) -> FaultLabelSet {
    let Some(rep) = report.representative() else {
        return FaultLabelSet::CORRECT;
    };
    match report.outcome {
        Outcome::Correct => FaultLabelSet::CORRECT,
        Outcome::ExecutionError => {
            let class = rep
                .exception_type
                .as_deref()
                .map(classify_execution_error)
                .unwrap_or(ExecErrorClass::Misc);
            FaultLabelSet::execution(class, line_class_for(rep.error_line, max_lines))
        }
        Outcome::IntentError => {
            let produced = rep.produced_output.clone().unwrap_or_default();
            let expected = &rep.expected_output;
            let class = match report.test_format {
                TestFormat::CallBased => classify_intent_error(&produced, expected),
                TestFormat::StdinStdout => classify_intent_error(
                    &value::structure_stdout(&produced),
                    &value::structure_stdout(expected),
                ),
            };
            // A wrong-output verdict on values that compare equal here means
            // the driver and this comparison disagree; keep the label total.
            FaultLabelSet::intent(class.unwrap_or(IntentErrorClass::Misc))
        }
    }
}
