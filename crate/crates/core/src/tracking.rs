//! Append-only run ledger and content hashing of configurations.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Compact JSON with object keys sorted and floats in shortest round-trip
/// form. Equal values always produce equal bytes.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // serde_json::Map is ordered by key unless `preserve_order` is enabled,
    // which this crate never does.
    let v = serde_json::to_value(value).map_err(|e| Error::Validation(format!("cannot serialize: {e}")))?;
    Ok(serde_json::to_string(&v).expect("a Value always serializes"))
}

/// SHA-256 hex digest of the canonical JSON.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let digest = Sha256::digest(canonical_json(value)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub config_hash: String,
    pub params: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, Value>,
    pub artifact_paths: Vec<String>,
}

impl RunRecord {
    /// Fresh record with a random v4 id, the current time and the hash of
    /// `params`.
    pub fn new(params: BTreeMap<String, Value>, metrics: BTreeMap<String, Value>, artifact_paths: Vec<String>) -> Result<Self> {
        Ok(RunRecord {
            run_id: uuid::Uuid::new_v4().to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            config_hash: config_hash(&params)?,
            params,
            metrics,
            artifact_paths,
        })
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::Validation(format!("{}: line {} is not a run record: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Appends one canonical-JSON line and returns the record's 0-based
/// position. Existing lines are never touched.
pub fn record_run(path: &Path, record: &RunRecord) -> Result<usize> {
    let existing = read_ledger(path)?;
    let ids: HashSet<&str> = existing.iter().map(|r| r.run_id.as_str()).collect();
    if ids.contains(record.run_id.as_str()) {
        return Err(Error::Validation(format!(
            "run id {} already present in {}",
            record.run_id,
            path.display()
        )));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let line = canonical_json(record)? + "\n";
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(existing.len())
}
