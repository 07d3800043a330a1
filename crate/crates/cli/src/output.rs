use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::contract::TableSpec;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotAsserted,
}

impl Verdict {
    pub fn from_check(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Fail => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub file: &'static str,
    pub bytes: Vec<u8>,
}

/// Render rows under the contract header, refusing rows whose field names
/// drift from it.
pub fn table<R: Serialize>(spec: &TableSpec, rows: &[R]) -> Result<Table> {
    let enc = |e: csv::Error| CliError::encode(spec.file, e);
    if let Some(first) = rows.first() {
        let mut probe = csv::Writer::from_writer(Vec::new());
        probe.serialize(first).map_err(enc)?;
        let bytes = probe.into_inner().map_err(|e| CliError::encode(spec.file, e))?;
        let header = String::from_utf8_lossy(&bytes);
        let header = header.lines().next().unwrap_or_default();
        if header != spec.columns.join(",") {
            return Err(CliError::encode(spec.file, format!("row layout `{header}` does not match the contract")));
        }
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(spec.columns).map_err(enc)?;
    for r in rows {
        w.serialize(r).map_err(enc)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::encode(spec.file, e))?;
    Ok(Table { file: spec.file, bytes })
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub version: &'a str,
    pub resample_count: u64,
    pub verdict: Verdict,
    pub result: &'a serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct Meta<'a> {
    pub config_hash: &'a str,
    pub version: &'a str,
    pub timestamp_unix: f64,
    pub wall_seconds: f64,
    pub threads: usize,
}

pub fn json_bytes<T: Serialize>(what: &str, value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::encode(what, e))?;
    v.push(b'\n');
    Ok(v)
}

/// Write every file to a temporary sibling first and rename only once all
/// of them exist, so a failed run leaves no partial outputs behind.
pub fn persist(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
        written.push(target);
    }
    Ok(written)
}
