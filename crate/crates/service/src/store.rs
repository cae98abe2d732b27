//! On-disk layout: one directory per session.
//!
//! ```text
//! <root>/<id>/audio.wav       upload, byte for byte
//!             session.json    id, creation time, initial config
//!             config.json     current config
//!             report.json     latest report and its version
//!             audit.jsonl     append-only threshold changes
//!             feedback.jsonl  append-only clinician verdicts
//! ```
//!
//! Whole-file writes go through a temp file and a rename. New sessions are
//! assembled in a hidden staging directory and renamed into place, so a
//! failed upload leaves nothing behind.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use dysfluency_core::RuleConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::model::{AuditEntry, FeedbackEntry, StoredReport};

pub const AUDIO: &str = "audio.wav";
pub const META: &str = "session.json";
pub const CONFIG: &str = "config.json";
pub const REPORT: &str = "report.json";
pub const AUDIT: &str = "audit.jsonl";
pub const FEEDBACK: &str = "feedback.jsonl";

const STAGING_PREFIX: &str = ".staging-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub created_at: String,
    pub initial_config: RuleConfig,
}

/// Everything read back from a session directory.
pub struct Loaded {
    pub meta: SessionMeta,
    pub wav: Vec<u8>,
    pub config: RuleConfig,
    pub report: StoredReport,
    pub audit: Vec<AuditEntry>,
    pub feedback: Vec<FeedbackEntry>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| ServiceError::storage(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| ServiceError::storage(path.display(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    write_atomic(path, &bytes)
}

/// Append records as JSON lines in a single write, then sync.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ServiceError::storage(path.display(), e))?;
    f.write_all(&buf)
        .and_then(|_| f.sync_data())
        .map_err(|e| ServiceError::storage(path.display(), e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| ServiceError::storage(path.display(), e))?;
    serde_json::from_slice(&text).map_err(|e| ServiceError::storage(path.display(), e))
}

/// Read a JSON-lines file. A torn final line (crash mid-append) is dropped
/// with a warning; corruption anywhere else is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(ServiceError::storage(path.display(), e)),
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: dropping torn last line: {e}", path.display());
            }
            Err(e) => {
                return Err(ServiceError::storage(
                    format!("{} line {}", path.display(), i + 1),
                    e,
                ))
            }
        }
    }
    Ok(out)
}

/// Write a complete new session and move it into `root/<id>`.
pub fn create(
    root: &Path,
    meta: &SessionMeta,
    wav: &[u8],
    config: &RuleConfig,
    report: &StoredReport,
) -> Result<PathBuf> {
    let staging = root.join(format!("{STAGING_PREFIX}{}", meta.id));
    let result = (|| {
        fs::create_dir_all(&staging).map_err(|e| ServiceError::storage(staging.display(), e))?;
        write_atomic(&staging.join(AUDIO), wav)?;
        write_json(&staging.join(META), meta)?;
        write_json(&staging.join(CONFIG), config)?;
        write_json(&staging.join(REPORT), report)?;
        for f in [AUDIT, FEEDBACK] {
            write_atomic(&staging.join(f), b"")?;
        }
        let dest = root.join(&meta.id);
        fs::rename(&staging, &dest).map_err(|e| ServiceError::storage(dest.display(), e))?;
        Ok(dest)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let wav = fs::read(dir.join(AUDIO)).map_err(|e| ServiceError::storage(dir.display(), e))?;
    Ok(Loaded {
        meta: read_json(&dir.join(META))?,
        wav,
        config: read_json(&dir.join(CONFIG))?,
        report: read_json(&dir.join(REPORT))?,
        audit: read_jsonl(&dir.join(AUDIT))?,
        feedback: read_jsonl(&dir.join(FEEDBACK))?,
    })
}

/// Session directories under `root`. Leftover staging directories from an
/// interrupted upload are removed.
pub fn session_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| ServiceError::storage(root.display(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| ServiceError::storage(root.display(), e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with(STAGING_PREFIX) {
            log::warn!("removing incomplete session {}", path.display());
            let _ = fs::remove_dir_all(&path);
        } else if path.join(META).exists() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"a\":1}\n{\"a\":2}\n{\"a\":").unwrap();
        let v: Vec<Value> = read_jsonl(&p).unwrap();
        assert_eq!(v, vec![json!({"a":1}), json!({"a":2})]);
    }

    #[test]
    fn corrupt_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        assert!(read_jsonl::<Value>(&p).is_err());
    }

    #[test]
    fn append_accumulates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        append_jsonl(&p, &[json!(1), json!(2)]).unwrap();
        append_jsonl::<Value>(&p, &[]).unwrap();
        append_jsonl(&p, &[json!(3)]).unwrap();
        assert_eq!(
            read_jsonl::<Value>(&p).unwrap(),
            vec![json!(1), json!(2), json!(3)]
        );
    }

    #[test]
    fn staging_leftovers_are_swept() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join(".staging-abc")).unwrap();
        fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(session_dirs(dir.path()).unwrap().is_empty());
        assert!(!dir.path().join(".staging-abc").exists());
    }
}
