//! Self-describing JSON reports.
//!
//! Every file is one object: `{"format": "svdae-report", "version": 1,
//! "kind": ..., "config": {...}, "body": {...}}`. Floats are written in
//! shortest round-trip form, so reloading yields the identical `f64`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "svdae-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub format: String,
    pub version: u32,
    /// What `body` holds, e.g. `eval` or `sweep`.
    pub kind: String,
    /// Echo of the run configuration.
    pub config: serde_json::Value,
    pub body: T,
}

pub fn write_report<T: Serialize, C: Serialize>(
    path: impl AsRef<Path>,
    kind: &str,
    config: &C,
    body: &T,
) -> Result<()> {
    let path = path.as_ref();
    let envelope = ReportEnvelope {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        kind: kind.into(),
        config: serde_json::to_value(config)?,
        body,
    };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<ReportEnvelope<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: ReportEnvelope<T> = serde_json::from_str(&text)?;
    if envelope.format != REPORT_FORMAT {
        return Err(Error::InvalidParameter(format!("{}: not an svdae report", path.display())));
    }
    Ok(envelope)
}
