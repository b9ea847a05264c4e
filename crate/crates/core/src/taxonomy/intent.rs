use serde_json::Value;

use super::value::{as_number, container_len, kind, values_match, ValueKind};
use super::{IntentErrorClass, TaxonomyError};

/// Integer outputs within this distance are a "small" miss.
pub const INT_SMALL_DELTA: f64 = 10.0;
/// String outputs whose lengths differ by at most this much are a "small" miss.
pub const STRING_SMALL_DELTA: usize = 3;

/// Largest absolute difference between numeric leaves of two same-shaped
/// values. Bools count as 0/1, floats take part only against floats.
fn numeric_delta(produced: &Value, expected: &Value) -> Option<f64> {
    match (kind(produced), kind(expected)) {
        (ValueKind::Int, ValueKind::Int)
        | (ValueKind::Bool, ValueKind::Bool)
        | (ValueKind::Float, ValueKind::Float) => {
            let (a, b) = (as_number(produced)?, as_number(expected)?);
            if a == b {
                Some(0.0)
            } else {
                Some((a - b).abs())
            }
        }
        (ValueKind::Sequence, ValueKind::Sequence) => {
            let (a, b) = (produced.as_array()?, expected.as_array()?);
            if a.len() != b.len() || a.is_empty() {
                return None;
            }
            a.iter().zip(b).try_fold(0.0_f64, |acc, (x, y)| {
                let d = numeric_delta(x, y)?;
                // NaN must win the max so it lands in the large bucket.
                Some(if d.is_nan() || d > acc { d } else { acc })
            })
        }
        _ => None,
    }
}

/// Assigns a wrong output to an intent-error class. The first rule that fires
/// wins:
///
/// 1. produced is null → `NoneError`
/// 2. produced is an empty container, expected a nonempty one → `EmptyError`
/// 3. type categories differ → `OutputTypeError`
/// 4. containers of different length → `LengthError`
/// 5. numeric values, or equal-shape numeric sequences, compared by their
///    largest delta → `IntSmallError` / `IntLargeError`
/// 6. strings compared by length difference → `StringSmallError` /
///    `StringLargeError`
/// 7. anything else → `Misc`
pub fn classify_intent_error(
    produced: &Value,
    expected: &Value,
) -> Result<IntentErrorClass, TaxonomyError> {
    if values_match(produced, expected) {
        return Err(TaxonomyError::ContractViolation);
    }
    let (pk, ek) = (kind(produced), kind(expected));

    if pk == ValueKind::Null {
        return Ok(IntentErrorClass::NoneError);
    }
    if let (Some(0), Some(n)) = (container_len(produced), container_len(expected)) {
        if n > 0 {
            return Ok(IntentErrorClass::EmptyError);
        }
    }
    if pk != ek {
        return Ok(IntentErrorClass::OutputTypeError);
    }
    if let (Some(a), Some(b)) = (container_len(produced), container_len(expected)) {
        if a != b {
            return Ok(IntentErrorClass::LengthError);
        }
    }
    if let Some(delta) = numeric_delta(produced, expected) {
        return Ok(if delta <= INT_SMALL_DELTA {
            IntentErrorClass::IntSmallError
        } else {
            IntentErrorClass::IntLargeError
        });
    }
    if let (Value::String(a), Value::String(b)) = (produced, expected) {
        let diff = a.chars().count().abs_diff(b.chars().count());
        return Ok(if diff <= STRING_SMALL_DELTA {
            IntentErrorClass::StringSmallError
        } else {
            IntentErrorClass::StringLargeError
        });
    }
    Ok(IntentErrorClass::Misc)
}
