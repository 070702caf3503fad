//! Versioned artifact persistence and the run manifest.
//!
//! Layout under a store root:
//!
//! ```text
//! runs/<run_id>/manifest                  JSON Lines, see [`manifest`]
//! runs/<run_id>/artifacts/<kind>-<digest> one JSON envelope per file
//! runs/<run_id>/state.json                pipeline stage bookkeeping
//! ```
//!
//! An artifact's digest covers its kind, schema version, payload and parent
//! digests. Run id and manifest entry range are recorded alongside but do not
//! enter the digest, so identical analyses in different runs share digests.
//! Because a parent must already be stored when its child is saved, the
//! parent graph cannot contain a cycle.

pub mod manifest;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

pub use manifest::{
    append_manifest, read_manifest, ArtifactRecord, CallOutcome, CallParameters, DecisionRecord,
    ManifestEntry, ManifestEvent, ManifestHeader, ManifestLog, ModelCallRecord, RunManifest,
    SelectionRecord,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Corpus,
    Codebook,
    Themebook,
    ConsistencyReport,
    Decision,
    Persona,
    TraceReport,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 7] = [
        ArtifactKind::Corpus,
        ArtifactKind::Codebook,
        ArtifactKind::Themebook,
        ArtifactKind::ConsistencyReport,
        ArtifactKind::Decision,
        ArtifactKind::Persona,
        ArtifactKind::TraceReport,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Corpus => "corpus",
            ArtifactKind::Codebook => "codebook",
            ArtifactKind::Themebook => "themebook",
            ArtifactKind::ConsistencyReport => "consistency_report",
            ArtifactKind::Decision => "decision",
            ArtifactKind::Persona => "persona",
            ArtifactKind::TraceReport => "trace_report",
        }
    }

    fn validate_payload(self, payload: &serde_json::Value) -> Result<()> {
        fn check<T: DeserializeOwned>(kind: ArtifactKind, v: &serde_json::Value) -> Result<()> {
            T::deserialize(v)
                .map(|_| ())
                .map_err(|e| Error::schema(format!("payload of {}", kind.as_str()), e))
        }
        match self {
            ArtifactKind::Corpus => check::<crate::corpus::Corpus>(self, payload),
            ArtifactKind::Codebook => check::<crate::coding::CodebookArtifact>(self, payload),
            ArtifactKind::Themebook => check::<crate::theming::ThemeBook>(self, payload),
            ArtifactKind::ConsistencyReport => {
                check::<crate::review::ConsistencyReport>(self, payload)
            }
            ArtifactKind::Decision => check::<crate::review::ReviewDecision>(self, payload),
            ArtifactKind::Persona => check::<crate::persona::Persona>(self, payload),
            ArtifactKind::TraceReport => check::<crate::trace::TraceReport>(self, payload),
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Provenance {
    pub run_id: String,
    #[serde(default)]
    pub parents: Vec<String>,
    /// First and last manifest sequence numbers of the calls that produced this artifact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_range: Option<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ArtifactEnvelope {
    pub artifact_kind: ArtifactKind,
    pub schema_version: u32,
    pub payload: serde_json::Value,
    pub provenance: Provenance,
}

impl ArtifactEnvelope {
    pub fn new<T: Serialize>(kind: ArtifactKind, payload: &T, provenance: Provenance) -> Result<Self> {
        let payload = serde_json::to_value(payload).map_err(|e| Error::schema("payload", e))?;
        Ok(ArtifactEnvelope {
            artifact_kind: kind,
            schema_version: SCHEMA_VERSION,
            payload,
            provenance,
        })
    }

    /// Content digest over kind, schema version, payload and parents.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "kind": self.artifact_kind,
            "schema_version": self.schema_version,
            "payload": self.payload,
            "parents": self.provenance.parents,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T> {
        T::deserialize(&self.payload)
            .map_err(|e| Error::schema(format!("payload of {}", self.artifact_kind), e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON digest of any serializable value (object keys sorted).
pub fn value_digest<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    sha256_hex(v.to_string().as_bytes())
}

/// Filesystem store rooted at a working directory.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join("manifest")
    }

    pub fn artifacts_dir(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join("artifacts")
    }

    pub fn run_exists(&self, run_id: &str) -> bool {
        self.manifest_path(run_id).is_file()
    }

    pub fn list_runs(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut runs = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.path().join("manifest").is_file() {
                runs.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        runs.sort();
        Ok(runs)
    }

    fn artifact_path(&self, run_id: &str, kind: ArtifactKind, digest: &str) -> PathBuf {
        self.artifacts_dir(run_id).join(format!("{}-{digest}", kind.as_str()))
    }

    /// Validate and atomically write an envelope; returns its digest.
    pub fn save_artifact(&self, env: &ArtifactEnvelope) -> Result<String> {
        if env.schema_version != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {}", env.schema_version),
            ));
        }
        env.artifact_kind.validate_payload(&env.payload)?;
        let run_id = &env.provenance.run_id;
        for parent in &env.provenance.parents {
            if self.find_artifact(run_id, parent)?.is_none() {
                return Err(Error::schema(
                    "provenance",
                    format!("parent {parent} is not stored in run {run_id}"),
                ));
            }
        }
        let digest = env.digest();
        let path = self.artifact_path(run_id, env.artifact_kind, &digest);
        let body = serde_json::to_vec_pretty(env).map_err(|e| Error::schema("envelope", e))?;
        write_atomic(&path, &body)?;
        Ok(digest)
    }

    /// Convenience: wrap a payload and save it.
    pub fn save<T: Serialize>(
        &self,
        kind: ArtifactKind,
        payload: &T,
        provenance: Provenance,
    ) -> Result<String> {
        self.save_artifact(&ArtifactEnvelope::new(kind, payload, provenance)?)
    }

    fn find_artifact(&self, run_id: &str, digest: &str) -> Result<Option<PathBuf>> {
        let dir = self.artifacts_dir(run_id);
        if !dir.exists() {
            return Ok(None);
        }
        for kind in ArtifactKind::ALL {
            let p = self.artifact_path(run_id, kind, digest);
            if p.is_file() {
                return Ok(Some(p));
            }
        }
        Ok(None)
    }

    pub fn load_artifact(&self, run_id: &str, digest: &str) -> Result<ArtifactEnvelope> {
        let path = self
            .find_artifact(run_id, digest)?
            .ok_or_else(|| Error::UnknownArtifact(format!("{run_id}/{digest}")))?;
        read_envelope(&path)
    }

    pub fn load<T: DeserializeOwned>(&self, run_id: &str, digest: &str) -> Result<T> {
        self.load_artifact(run_id, digest)?.payload_as()
    }

    /// Digests of every stored artifact of `kind`, sorted.
    pub fn list_artifacts(&self, run_id: &str, kind: ArtifactKind) -> Result<Vec<String>> {
        let dir = self.artifacts_dir(run_id);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let prefix = format!("{}-", kind.as_str());
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(d) = name.strip_prefix(&prefix) {
                // "consistency_report-" must not match a hypothetical "consistency-" kind
                if d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit()) {
                    out.push(d.to_owned());
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

pub fn read_envelope(path: &Path) -> Result<ArtifactEnvelope> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::schema(path.display().to_string(), e))
}

/// Write via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no parent")))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::review::{ReviewDecision, ThemeAction, ActionKind};
    use crate::coding::Dimension;

    fn decision() -> ReviewDecision {
        ReviewDecision {
            dimension: Dimension::Challenge,
            actions: vec![ThemeAction {
                action: ActionKind::Keep,
                baseline_theme_id: Some("challenge-baseline-01".into()),
                replacement: None,
            }],
            analyst_note: "ok".into(),
            decided_by: "analyst".into(),
        }
    }

    fn prov(parents: Vec<String>) -> Provenance {
        Provenance {
            run_id: "r".into(),
            parents,
            entry_range: None,
        }
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let env = ArtifactEnvelope::new(ArtifactKind::Decision, &decision(), prov(vec![])).unwrap();
        let digest = store.save_artifact(&env).unwrap();
        let loaded = store.load_artifact("r", &digest).unwrap();
        assert_eq!(loaded, env);
        let typed: ReviewDecision = store.load("r", &digest).unwrap();
        assert_eq!(typed, decision());
        assert_eq!(store.list_artifacts("r", ArtifactKind::Decision).unwrap(), vec![digest]);
    }

    #[test]
    fn identical_content_identical_digest() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let env = ArtifactEnvelope::new(ArtifactKind::Decision, &decision(), prov(vec![])).unwrap();
        assert_eq!(store.save_artifact(&env).unwrap(), store.save_artifact(&env).unwrap());
        let mut other_run = env.clone();
        other_run.provenance.entry_range = Some((1, 4));
        assert_eq!(other_run.digest(), env.digest());
    }

    #[test]
    fn unresolvable_parent_is_a_provenance_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let env = ArtifactEnvelope::new(ArtifactKind::Decision, &decision(), prov(vec!["ab".repeat(32)]))
            .unwrap();
        match store.save_artifact(&env) {
            Err(Error::Schema { context, .. }) => assert_eq!(context, "provenance"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parent_that_exists_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let parent = store.save(ArtifactKind::Decision, &decision(), prov(vec![])).unwrap();
        let child = store.save(ArtifactKind::Decision, &decision(), prov(vec![parent.clone()]));
        assert!(child.is_ok());
        assert_ne!(child.unwrap(), parent);
    }

    #[test]
    fn payload_schema_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let env = ArtifactEnvelope::new(
            ArtifactKind::Decision,
            &serde_json::json!({"not": "a decision"}),
            prov(vec![]),
        )
        .unwrap();
        assert!(matches!(store.save_artifact(&env), Err(Error::Schema { .. })));
    }
}
