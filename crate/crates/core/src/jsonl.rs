//! Versioned JSONL files: an optional-or-required header record followed by
//! one JSON record per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

pub const TASKS: &str = "faultrank.tasks";
pub const CANDIDATES: &str = "faultrank.candidates";
pub const REPORTS: &str = "faultrank.reports";
pub const TIMING: &str = "faultrank.timing";
pub const LABELED: &str = "faultrank.labeled";
pub const SCORES: &str = "faultrank.scores";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub version: u32,
    /// The resolved configuration that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
}

impl Header {
    pub fn new(schema: &str, config: Option<Value>) -> Self {
        Self {
            schema: schema.to_string(),
            version: SCHEMA_VERSION,
            config,
        }
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: expected schema {expected:?}, found {found:?}")]
    SchemaMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {schema} schema version mismatch: expected {expected}, found {found}")]
    VersionMismatch {
        path: PathBuf,
        schema: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: missing {expected:?} header record")]
    MissingHeader { path: PathBuf, expected: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderPolicy {
    Required,
    /// User-authored inputs may omit the header.
    Optional,
}

fn as_header(value: &Value) -> Option<Header> {
    let obj = value.as_object()?;
    if !obj.contains_key("schema") {
        return None;
    }
    serde_json::from_value(value.clone()).ok()
}

/// serde reports positions within the record, which is always on line 1.
fn record_error(e: &serde_json::Error) -> String {
    let text = e.to_string();
    let message = text.split(" at line ").next().unwrap_or(&text);
    format!("{message} (column {})", e.column())
}

/// Parses JSONL text. Blank lines are skipped; errors carry 1-based line
/// numbers.
pub fn parse_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    path: &Path,
    schema: &str,
    policy: HeaderPolicy,
) -> Result<(Option<Header>, Vec<T>), JsonlError> {
    let mut header = None;
    let mut records = Vec::new();
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| JsonlError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(record_error(&e)))?;
        if first {
            first = false;
            if let Some(h) = as_header(&value) {
                if h.schema != schema {
                    return Err(JsonlError::SchemaMismatch {
                        path: path.to_path_buf(),
                        expected: schema.to_string(),
                        found: h.schema,
                    });
                }
                if h.version != SCHEMA_VERSION {
                    return Err(JsonlError::VersionMismatch {
                        path: path.to_path_buf(),
                        schema: h.schema,
                        expected: SCHEMA_VERSION,
                        found: h.version,
                    });
                }
                header = Some(h);
                continue;
            }
            if policy == HeaderPolicy::Required {
                return Err(JsonlError::MissingHeader {
                    path: path.to_path_buf(),
                    expected: schema.to_string(),
                });
            }
        }
        records.push(serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?);
    }
    if first && policy == HeaderPolicy::Required {
        return Err(JsonlError::MissingHeader {
            path: path.to_path_buf(),
            expected: schema.to_string(),
        });
    }
    Ok((header, records))
}

pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    schema: &str,
    policy: HeaderPolicy,
) -> Result<(Option<Header>, Vec<T>), JsonlError> {
    let file = File::open(path).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_jsonl(BufReader::new(file), path, schema, policy)
}

/// Writes the header on creation, then one record per [`JsonlWriter::write`].
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(mut out: W, header: &Header) -> io::Result<Self> {
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        Ok(Self { out })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl JsonlWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &Header) -> io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    header: &Header,
    records: impl IntoIterator<Item = &'a T>,
) -> io::Result<()> {
    let mut w = JsonlWriter::create(path, header)?;
    for r in records {
        w.write(r)?;
    }
    w.into_inner()?.into_inner().map_err(|e| e.into_error())?.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(text: &str, policy: HeaderPolicy) -> Result<(Option<Header>, Vec<Value>), JsonlError> {
        parse_jsonl(text.as_bytes(), Path::new("f.jsonl"), SCORES, policy)
    }

    #[test]
    fn header_round_trip() {
        let mut w = JsonlWriter::new(Vec::new(), &Header::new(SCORES, Some(json!({"seed": 7})))).unwrap();
        w.write(&json!({"a": 1})).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert!(text.starts_with("{\"schema\":\"faultrank.scores\",\"version\":1,"));
        let (h, recs) = parse(&text, HeaderPolicy::Required).unwrap();
        assert_eq!(h.unwrap().config, Some(json!({"seed": 7})));
        assert_eq!(recs, vec![json!({"a": 1})]);
    }

    #[test]
    fn line_numbers_in_errors() {
        let text = "{\"a\":1}\n\n{\"a\":2}\n{oops\n";
        match parse(text, HeaderPolicy::Optional) {
            Err(JsonlError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_checks() {
        assert!(matches!(
            parse("{\"a\":1}\n", HeaderPolicy::Required),
            Err(JsonlError::MissingHeader { .. })
        ));
        assert!(matches!(parse("", HeaderPolicy::Required), Err(JsonlError::MissingHeader { .. })));
        assert!(matches!(
            parse("{\"schema\":\"faultrank.scores\",\"version\":2}\n", HeaderPolicy::Optional),
            Err(JsonlError::VersionMismatch { expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            parse("{\"schema\":\"faultrank.tasks\",\"version\":1}\n", HeaderPolicy::Optional),
            Err(JsonlError::SchemaMismatch { .. })
        ));
        let (h, recs) = parse("{\"a\":1}\n", HeaderPolicy::Optional).unwrap();
        assert!(h.is_none());
        assert_eq!(recs.len(), 1);
    }
}
