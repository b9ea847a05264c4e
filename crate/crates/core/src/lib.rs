//! Execute sampled programs against unit tests, label their faults, train
//! fault-aware rankers over the labels, and measure ranking quality.

pub mod dataset;
pub mod harness;
pub mod jsonl;
pub mod metrics;
pub mod ranker;
pub mod taxonomy;
