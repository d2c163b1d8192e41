//! CSV and JSON writers shared by the report and analysis outputs. Every
//! CSV starts with a `# config: <json>` line echoing the run configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const ECHO_PREFIX: &str = "# config: ";

pub fn write_csv(path: &Path, echo: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{ECHO_PREFIX}{echo}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::InvalidData(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Text after the echo line, for readers that skip it.
pub fn strip_echo(text: &str) -> &str {
    match text.strip_prefix(ECHO_PREFIX) {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => text,
    }
}
