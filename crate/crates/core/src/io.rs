//! JSON Lines helpers and atomic file output.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

/// Serializes each item as one compact JSON line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_atomic(path, &to_jsonl(items)?)
}

/// Reads a JSON Lines file as raw values, skipping blank lines. Parse errors
/// carry the 1-based line number.
pub fn read_jsonl_values(path: &Path) -> Result<Vec<(usize, serde_json::Value)>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_jsonl_values(path)?
        .into_iter()
        .map(|(line, v)| {
            serde_json::from_value(v).map_err(|e| IoError::Parse {
                path: path.display().to_string(),
                line,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Counts object keys present in `input` but absent from `known`, recursing
/// through objects and arrays that exist in both.
pub(crate) fn count_unknown_fields(input: &serde_json::Value, known: &serde_json::Value) -> usize {
    use serde_json::Value;
    match (input, known) {
        (Value::Object(a), Value::Object(b)) => a
            .iter()
            .map(|(k, v)| match b.get(k) {
                Some(kv) => count_unknown_fields(v, kv),
                None => 1,
            })
            .sum(),
        (Value::Array(a), Value::Array(b)) => a.iter().zip(b.iter()).map(|(x, y)| count_unknown_fields(x, y)).sum(),
        _ => 0,
    }
}
