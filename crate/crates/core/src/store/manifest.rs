//! The append-only run manifest.
//!
//! On disk the manifest is JSON Lines: a header line followed by one line per
//! entry. Entries carry consecutive sequence numbers starting at 1.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::PurposeTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ManifestHeader {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    /// Effective configuration at run creation.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RunManifest {
    #[serde(flatten)]
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ManifestEntry {
    pub sequence: u64,
    pub recorded_at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: ManifestEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEvent {
    ModelCall(ModelCallRecord),
    Decision(DecisionRecord),
    Selection(SelectionRecord),
    Artifact(ArtifactRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CallParameters {
    pub model_name: String,
    pub temperature: f64,
    pub max_response_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ModelCallRecord {
    pub purpose: PurposeTag,
    pub request_digest: String,
    pub prompt_text: String,
    pub parameters: CallParameters,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    pub outcome: CallOutcome,
    pub attempts: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CallOutcome {
    Ok { truncated: bool },
    Failed { error_class: String, message: String },
}

impl CallOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, CallOutcome::Ok { .. })
    }
}

/// A human review decision, stored by value so the manifest alone documents it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DecisionRecord {
    pub dimension: String,
    pub decided_by: String,
    pub decision_digest: String,
    pub decision: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SelectionRecord {
    pub decided_by: String,
    pub selection: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ArtifactRecord {
    pub artifact_kind: String,
    pub digest: String,
}

impl ManifestEntry {
    pub fn model_call(&self) -> Option<&ModelCallRecord> {
        match &self.event {
            ManifestEvent::ModelCall(call) => Some(call),
            _ => None,
        }
    }
}

impl RunManifest {
    pub fn new(run_id: impl Into<String>, config: serde_json::Value) -> Self {
        RunManifest {
            header: ManifestHeader {
                run_id: run_id.into(),
                created_at: Utc::now(),
                config,
            },
            entries: Vec::new(),
        }
    }

    pub fn run_id(&self) -> &str {
        &self.header.run_id
    }

    pub fn last_sequence(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.sequence)
    }

    pub fn model_calls(&self) -> impl Iterator<Item = &ModelCallRecord> {
        self.entries.iter().filter_map(ManifestEntry::model_call)
    }

    pub fn count_purpose(&self, purpose: PurposeTag) -> usize {
        self.model_calls().filter(|c| c.purpose == purpose).count()
    }

    /// Check that sequences run 1, 2, 3, ... with no gaps.
    pub fn verify(&self) -> Result<()> {
        for (i, entry) in self.entries.iter().enumerate() {
            let expected = i as u64 + 1;
            if entry.sequence != expected {
                return Err(Error::ManifestCorruption(format!(
                    "entry {} has sequence {}, expected {expected}",
                    i + 1,
                    entry.sequence
                )));
            }
        }
        Ok(())
    }
}

/// Append `entry` to `run`, which must continue the sequence exactly.
pub fn append_manifest(mut run: RunManifest, entry: ManifestEntry) -> Result<RunManifest> {
    let expected = run.last_sequence() + 1;
    if entry.sequence != expected {
        return Err(Error::ManifestCorruption(format!(
            "append with sequence {} after {}",
            entry.sequence,
            run.last_sequence()
        )));
    }
    run.entries.push(entry);
    Ok(run)
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ManifestHeader,
}

/// Single writer for a run's manifest, shared between workers.
///
/// Every append is written and flushed to disk (when file-backed) before the
/// call returns.
#[derive(Debug)]
pub struct ManifestLog {
    inner: Mutex<LogInner>,
}

#[derive(Debug)]
struct LogInner {
    manifest: RunManifest,
    file: Option<(PathBuf, File)>,
}

impl ManifestLog {
    pub fn in_memory(run_id: impl Into<String>, config: serde_json::Value) -> Self {
        ManifestLog {
            inner: Mutex::new(LogInner {
                manifest: RunManifest::new(run_id, config),
                file: None,
            }),
        }
    }

    /// Start a new manifest file at `path`; fails if one already exists.
    pub fn create(path: &Path, run_id: impl Into<String>, config: serde_json::Value) -> Result<Self> {
        let manifest = RunManifest::new(run_id, config);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(&HeaderLine {
            header: manifest.header.clone(),
        })
        .map_err(|e| Error::schema("manifest header", e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
        file.sync_data().map_err(|e| Error::io(path, e))?;
        Ok(ManifestLog {
            inner: Mutex::new(LogInner {
                manifest,
                file: Some((path.to_path_buf(), file)),
            }),
        })
    }

    /// Reopen an existing manifest for further appends.
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = read_manifest(path)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ManifestLog {
            inner: Mutex::new(LogInner {
                manifest,
                file: Some((path.to_path_buf(), file)),
            }),
        })
    }

    /// Append an event under the next sequence number and return that number.
    pub fn record(&self, event: ManifestEvent) -> Result<u64> {
        let mut inner = self.inner.lock().expect("manifest lock poisoned");
        let entry = ManifestEntry {
            sequence: inner.manifest.last_sequence() + 1,
            recorded_at: Utc::now(),
            event,
        };
        let seq = entry.sequence;
        inner.push(entry)?;
        Ok(seq)
    }

    /// Append a fully formed entry; its sequence must continue the log.
    pub fn append(&self, entry: ManifestEntry) -> Result<()> {
        let mut inner = self.inner.lock().expect("manifest lock poisoned");
        let expected = inner.manifest.last_sequence() + 1;
        if entry.sequence != expected {
            return Err(Error::ManifestCorruption(format!(
                "append with sequence {} after {}",
                entry.sequence,
                expected - 1
            )));
        }
        inner.push(entry)
    }

    pub fn snapshot(&self) -> RunManifest {
        self.inner.lock().expect("manifest lock poisoned").manifest.clone()
    }

    pub fn run_id(&self) -> String {
        self.inner.lock().expect("manifest lock poisoned").manifest.header.run_id.clone()
    }

    pub fn last_sequence(&self) -> u64 {
        self.inner.lock().expect("manifest lock poisoned").manifest.last_sequence()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("manifest lock poisoned").manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LogInner {
    fn push(&mut self, entry: ManifestEntry) -> Result<()> {
        if let Some((path, file)) = self.file.as_mut() {
            let line = serde_json::to_string(&entry).map_err(|e| Error::schema("manifest entry", e))?;
            writeln!(file, "{line}").map_err(|e| Error::io(&*path, e))?;
            file.flush().map_err(|e| Error::io(&*path, e))?;
        }
        self.manifest.entries.push(entry);
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::ManifestCorruption(format!("{} is empty", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let HeaderLine { header } = serde_json::from_str(&header_line)
        .map_err(|e| Error::ManifestCorruption(format!("bad header: {e}")))?;
    let mut manifest = RunManifest {
        header,
        entries: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::ManifestCorruption(format!("line {}: {e}", i + 2)))?;
        manifest.entries.push(entry);
    }
    manifest.verify()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn artifact_event(n: u32) -> ManifestEvent {
        ManifestEvent::Artifact(ArtifactRecord {
            artifact_kind: "codebook".into(),
            digest: format!("d{n}"),
        })
    }

    fn entry(sequence: u64) -> ManifestEntry {
        ManifestEntry {
            sequence,
            recorded_at: Utc::now(),
            event: artifact_event(0),
        }
    }

    #[test]
    fn fresh_manifest_appends_in_sequence() {
        let mut run = RunManifest::new("r", serde_json::json!({}));
        for s in 1..=3 {
            run = append_manifest(run, entry(s)).unwrap();
        }
        let seqs: Vec<u64> = run.entries.iter().map(|e| e.sequence).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
    }

    #[test]
    fn sequence_gap_is_corruption() {
        let mut run = RunManifest::new("r", serde_json::json!({}));
        for s in 1..=3 {
            run = append_manifest(run, entry(s)).unwrap();
        }
        assert!(matches!(
            append_manifest(run, entry(5)),
            Err(Error::ManifestCorruption(_))
        ));
    }

    #[test]
    fn file_backed_log_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs/r1/manifest");
        let log = ManifestLog::create(&path, "r1", serde_json::json!({"model": "m"})).unwrap();
        assert_eq!(log.record(artifact_event(1)).unwrap(), 1);
        assert_eq!(log.record(artifact_event(2)).unwrap(), 2);
        assert!(log.append(entry(7)).is_err());
        drop(log);

        let reopened = ManifestLog::open(&path).unwrap();
        assert_eq!(reopened.record(artifact_event(3)).unwrap(), 3);
        let on_disk = read_manifest(&path).unwrap();
        assert_eq!(on_disk.entries.len(), 3);
        assert_eq!(on_disk.run_id(), "r1");
        assert_eq!(on_disk, reopened.snapshot());
    }

    #[test]
    fn create_refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest");
        ManifestLog::create(&path, "a", serde_json::json!({})).unwrap();
        assert!(ManifestLog::create(&path, "a", serde_json::json!({})).is_err());
    }

    #[test]
    fn reading_detects_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest");
        let log = ManifestLog::create(&path, "a", serde_json::json!({})).unwrap();
        log.record(artifact_event(1)).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        writeln!(f, "{}", serde_json::to_string(&entry(4)).unwrap()).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::ManifestCorruption(_))));
    }
}
