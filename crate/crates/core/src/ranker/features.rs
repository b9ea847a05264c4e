//! Hashed n-gram features over the `prompt [SEP] code` token sequence.
//!
//! Tokens are maximal runs of alphanumerics/underscore, and every other
//! non-whitespace character stands alone. N-grams are hashed with 64-bit
//! FNV-1a (namespace byte, then each token followed by `0x1f`) and reduced
//! modulo the power-of-two dimension, so features are identical on every
//! platform.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEP_TOKEN: &str = "[SEP]";
pub const HASH_SPEC: &str = "fnv1a64;ns-byte+tok+0x1f;mod-dim";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const TOKEN_END: u8 = 0x1f;

// Namespace bytes keep the feature families apart in hash space.
const NS_GLOBAL: u8 = b'G';
const NS_LINE: u8 = b'L';
const NS_NO_ERROR: u8 = b'N';
const NS_BEYOND: u8 = b'B';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub dim: usize,
    pub max_tokens: usize,
    pub ngram: usize,
    /// Scale each feature row to unit L2 norm before it reaches the model.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dim: 1 << 18,
            max_tokens: 512,
            ngram: 3,
            normalize: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureConfigError {
    #[error("dimension {0} must be a power of two no larger than 2^31")]
    Dimension(usize),
    #[error("max_tokens must be at least 8, got {0}")]
    MaxTokens(usize),
    #[error("n-gram order must be between 1 and 5, got {0}")]
    Ngram(usize),
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureConfigError> {
        if !self.dim.is_power_of_two() || self.dim > 1 << 31 {
            return Err(FeatureConfigError::Dimension(self.dim));
        }
        if self.max_tokens < 8 {
            return Err(FeatureConfigError::MaxTokens(self.max_tokens));
        }
        if !(1..=5).contains(&self.ngram) {
            return Err(FeatureConfigError::Ngram(self.ngram));
        }
        Ok(())
    }
}

/// Sparse count vector, sorted by feature index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureVector {
    entries: Vec<(u32, u32)>,
}

impl FeatureVector {
    fn from_counts(counts: BTreeMap<u32, u32>) -> Self {
        Self {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// Model input values: raw counts, or counts scaled to unit norm.
    pub fn values(&self, normalize: bool) -> Vec<(u32, f64)> {
        let scale = if normalize && !self.entries.is_empty() {
            let sq: f64 = self.entries.iter().map(|&(_, c)| f64::from(c).powi(2)).sum();
            1.0 / sq.sqrt()
        } else {
            1.0
        };
        self.entries
            .iter()
            .map(|&(i, c)| (i, f64::from(c) * scale))
            .collect()
    }
}

/// One feature row per candidate line plus the two sentinel rows: row 0 means
/// "no execution error", row `m + 1` means "fault beyond the encoded window".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineFeatureVector {
    pub rows: Vec<FeatureVector>,
    pub encoded_lines: usize,
}

impl LineFeatureVector {
    /// Maps a stored line class onto this encoding's rows.
    pub fn target(&self, line_class: usize) -> usize {
        if line_class <= self.encoded_lines {
            line_class
        } else {
            self.encoded_lines + 1
        }
    }
}

pub fn fnv1a64(namespace: u8, tokens: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    };
    feed(namespace);
    for tok in tokens {
        tok.bytes().for_each(&mut feed);
        feed(TOKEN_END);
    }
    h
}

fn bucket(hash: u64, dim: usize) -> u32 {
    (hash & (dim as u64 - 1)) as u32
}

/// Splits text on whitespace and punctuation, keeping punctuation as tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        let word = ch.is_alphanumeric() || ch == '_';
        if word {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            tokens.push(&text[s..i]);
        }
        if !ch.is_whitespace() {
            tokens.push(&text[i..i + ch.len_utf8()]);
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

struct Encoded<'a> {
    tokens: Vec<&'a str>,
    /// Token range of each encoded code line within `tokens`.
    lines: Vec<(usize, usize)>,
    truncated: bool,
}

fn encode<'a>(prompt: &'a str, code: &'a str, max_tokens: usize) -> Encoded<'a> {
    let mut tokens = tokenize(prompt);
    tokens.push(SEP_TOKEN);
    let mut lines = Vec::new();
    let mut truncated = tokens.len() > max_tokens;
    for line in code.lines() {
        let start = tokens.len();
        if start >= max_tokens {
            truncated = true;
            break;
        }
        tokens.extend(tokenize(line));
        lines.push((start, tokens.len().min(max_tokens)));
    }
    if tokens.len() > max_tokens {
        truncated = true;
        tokens.truncate(max_tokens);
    }
    Encoded {
        tokens,
        lines,
        truncated,
    }
}

fn add_ngrams(counts: &mut BTreeMap<u32, u32>, ns: u8, tokens: &[&str], order: usize, dim: usize) {
    for n in 1..=order {
        for gram in tokens.windows(n) {
            *counts.entry(bucket(fnv1a64(ns, gram), dim)).or_insert(0) += 1;
        }
    }
}

/// Hashed 1..=`ngram`-grams of the first `max_tokens` tokens of
/// `prompt [SEP] code`.
pub fn featurize(prompt: &str, code: &str, config: &FeatureConfig) -> FeatureVector {
    let encoded = encode(prompt, code, config.max_tokens);
    let mut counts = BTreeMap::new();
    add_ngrams(&mut counts, NS_GLOBAL, &encoded.tokens, config.ngram, config.dim);
    FeatureVector::from_counts(counts)
}

/// Per-line rows for the error-line head. Line rows hold unigrams and bigrams
/// of that line's in-window tokens. The no-error sentinel row carries its own
/// marker plus the whole input's n-grams in a separate namespace; the beyond
/// sentinel carries its marker and a truncation flag.
pub fn featurize_lines(prompt: &str, code: &str, config: &FeatureConfig) -> LineFeatureVector {
    let encoded = encode(prompt, code, config.max_tokens);
    let dim = config.dim;
    let mut rows = Vec::with_capacity(encoded.lines.len() + 2);

    let mut none = BTreeMap::new();
    none.insert(bucket(fnv1a64(NS_NO_ERROR, &["<no-error>"]), dim), 1);
    add_ngrams(&mut none, NS_NO_ERROR, &encoded.tokens, config.ngram, dim);
    rows.push(FeatureVector::from_counts(none));

    for &(start, end) in &encoded.lines {
        let mut counts = BTreeMap::new();
        add_ngrams(&mut counts, NS_LINE, &encoded.tokens[start..end], 2.min(config.ngram), dim);
        rows.push(FeatureVector::from_counts(counts));
    }

    let mut beyond = BTreeMap::new();
    beyond.insert(bucket(fnv1a64(NS_BEYOND, &["<beyond>"]), dim), 1);
    if encoded.truncated {
        *beyond
            .entry(bucket(fnv1a64(NS_BEYOND, &["<truncated>"]), dim))
            .or_insert(0) += 1;
    }
    rows.push(FeatureVector::from_counts(beyond));

    LineFeatureVector {
        rows,
        encoded_lines: encoded.lines.len(),
    }
}
