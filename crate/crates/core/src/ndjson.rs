//! Newline-delimited JSON records, the on-disk format of every artifact.
//!
//! Blank lines are ignored. A record that is an object carrying the
//! [`HEADER_KEY`] key is a provenance header (the run configuration) and is
//! skipped by [`read_records`].

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::{Error, Result};

pub const HEADER_KEY: &str = "run_config";

/// Reads every non-blank line of `path` as a JSON value, keeping 1-based line numbers.
pub fn read_values(path: &Path) -> Result<Vec<(usize, Value)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn is_header(value: &Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.contains_key(HEADER_KEY))
}

/// Reads typed records, skipping provenance headers.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    read_values(path)?
        .into_iter()
        .filter(|(_, v)| !is_header(v))
        .map(|(line, v)| {
            serde_json::from_value(v)
                .map(|rec| (line, rec))
                .map_err(|e| Error::parse(path, line, e.to_string()))
        })
        .collect()
}

pub fn write_record<W: Write, T: Serialize + ?Sized>(mut out: W, record: &T) -> Result<()> {
    serde_json::to_writer(&mut out, record)?;
    out.write_all(b"\n").map_err(|e| Error::io("<output>", e))
}

pub fn write_header<W: Write, T: Serialize + ?Sized>(out: W, config: &T) -> Result<()> {
    let mut header = serde_json::Map::new();
    header.insert(HEADER_KEY.to_owned(), serde_json::to_value(config)?);
    write_record(out, &Value::Object(header))
}
