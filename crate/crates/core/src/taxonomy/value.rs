//! Output values as they come back from the driver: JSON, with tuples already
//! flattened to arrays and non-finite floats tagged as `{"$float": "..."}`.

use serde_json::Value;

use crate::harness::TestFormat;

/// Absolute tolerance for fractional number comparisons.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

const FLOAT_TAG: &str = "$float";

/// Type categories used to detect output type mismatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Null,
    Bool,
    Int,
    Float,
    String,
    Sequence,
    Map,
}

fn tagged_float(map: &serde_json::Map<String, Value>) -> Option<f64> {
    if map.len() != 1 {
        return None;
    }
    match map.get(FLOAT_TAG)?.as_str()? {
        "inf" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        "nan" | "NaN" => Some(f64::NAN),
        _ => None,
    }
}

pub fn kind(value: &Value) -> ValueKind {
    match value {
        Value::Null => ValueKind::Null,
        Value::Bool(_) => ValueKind::Bool,
        Value::Number(n) if n.is_f64() => ValueKind::Float,
        Value::Number(_) => ValueKind::Int,
        Value::String(_) => ValueKind::String,
        Value::Array(_) => ValueKind::Sequence,
        Value::Object(map) if tagged_float(map).is_some() => ValueKind::Float,
        Value::Object(_) => ValueKind::Map,
    }
}

/// Numeric view of ints, floats (tagged or not) and bools.
pub fn as_number(value: &Value) -> Option<f64> {
    match value {
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        Value::Number(n) => n.as_f64(),
        Value::Object(map) => tagged_float(map),
        _ => None,
    }
}

/// Number of elements for sequences and (untagged) maps.
pub fn container_len(value: &Value) -> Option<usize> {
    match (value, kind(value)) {
        (Value::Array(a), _) => Some(a.len()),
        (Value::Object(m), ValueKind::Map) => Some(m.len()),
        _ => None,
    }
}

fn numbers_match(a: f64, b: f64, fractional: bool) -> bool {
    if a.is_nan() || b.is_nan() {
        return false;
    }
    if a.is_infinite() || b.is_infinite() || !fractional {
        return a == b;
    }
    (a - b).abs() <= FLOAT_TOLERANCE
}

/// Structural equality for call-based return values: arrays compare
/// elementwise, numbers compare with [`FLOAT_TOLERANCE`] when either side is
/// fractional, and ints never equal bools.
pub fn values_match(produced: &Value, expected: &Value) -> bool {
    let (pk, ek) = (kind(produced), kind(expected));
    match (pk, ek) {
        (ValueKind::Int | ValueKind::Float, ValueKind::Int | ValueKind::Float) => {
            match (as_number(produced), as_number(expected)) {
                (Some(a), Some(b)) => {
                    let fractional = pk == ValueKind::Float || ek == ValueKind::Float;
                    if fractional {
                        numbers_match(a, b, true)
                    } else {
                        // Compare ints exactly, without going through f64.
                        produced == expected
                    }
                }
                _ => false,
            }
        }
        (ValueKind::Sequence, ValueKind::Sequence) => {
            let (a, b) = (produced.as_array().unwrap(), expected.as_array().unwrap());
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y))
        }
        (ValueKind::Map, ValueKind::Map) => {
            let (a, b) = (produced.as_object().unwrap(), expected.as_object().unwrap());
            a.len() == b.len()
                && a.iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ if pk == ek => produced == expected,
        _ => false,
    }
}

/// Expected stdout may be stored as a string or a list of lines.
pub fn stdout_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(stdout_text)
            .collect::<Vec<_>>()
            .join("\n"),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Lines with trailing whitespace stripped and trailing blank lines dropped.
pub fn normalized_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

fn lines_match(a: &str, b: &str) -> bool {
    if a == b {
        return true;
    }
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => numbers_match(x, y, true),
        _ => false,
    }
}

/// Output comparison under the task's test format.
pub fn outputs_match(produced: &Value, expected: &Value, format: TestFormat) -> bool {
    match format {
        TestFormat::CallBased => values_match(produced, expected),
        TestFormat::StdinStdout => {
            let (p, e) = (stdout_text(produced), stdout_text(expected));
            let (p, e) = (normalized_lines(&p), normalized_lines(&e));
            p.len() == e.len() && p.iter().zip(&e).all(|(a, b)| lines_match(a, b))
        }
    }
}

fn token_value(token: &str) -> Value {
    if let Ok(i) = token.parse::<i64>() {
        return Value::from(i);
    }
    match token.parse::<f64>() {
        Ok(f) if f.is_finite() => Value::from(f),
        _ => Value::from(token),
    }
}

/// Parses printed output into a list of lines, each a list of whitespace
/// tokens with numeric tokens read as numbers: `"2\n3\n"` becomes `[[2], [3]]`.
pub fn structure_stdout(value: &Value) -> Value {
    let text = stdout_text(value);
    Value::Array(
        normalized_lines(&text)
            .into_iter()
            .map(|line| Value::Array(line.split_whitespace().map(token_value).collect()))
            .collect(),
    )
}
