use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{Binary, ClassLabel, Exec12, FaultLabelSet, Intent11, Ternary};

/// The five ranker formulations. Every class list starts with `Correct`, so
/// class index 0 is always the ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankerTask {
    Binary,
    Ternary,
    Intent,
    Exec,
    ExecLine,
}

pub const CORRECT_CLASS: usize = 0;

impl RankerTask {
    pub const ALL: [RankerTask; 5] = [
        RankerTask::Binary,
        RankerTask::Ternary,
        RankerTask::Intent,
        RankerTask::Exec,
        RankerTask::ExecLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::Ternary => "ternary",
            Self::Intent => "intent",
            Self::Exec => "exec",
            Self::ExecLine => "exec-line",
        }
    }

    pub fn classes(self) -> Vec<&'static str> {
        match self {
            Self::Binary => Binary::names(),
            Self::Ternary => Ternary::names(),
            Self::Intent => Intent11::names(),
            Self::Exec | Self::ExecLine => Exec12::names(),
        }
    }

    pub fn num_classes(self) -> usize {
        self.classes().len()
    }

    pub fn has_line_head(self) -> bool {
        self == Self::ExecLine
    }

    pub fn class_index(self, labels: &FaultLabelSet) -> usize {
        match self {
            Self::Binary => labels.binary.index(),
            Self::Ternary => labels.ternary.index(),
            Self::Intent => labels.intent11.index(),
            Self::Exec | Self::ExecLine => labels.exec12.index(),
        }
    }

    pub fn class_name(self, labels: &FaultLabelSet) -> &'static str {
        self.classes()[self.class_index(labels)]
    }
}

impl fmt::Display for RankerTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown ranker task {s:?} (binary|ternary|intent|exec|exec-line)"))
    }
}
