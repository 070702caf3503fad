//! Offline provider answering from a registry of canned responses.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Deserialize;

use super::{PromptRequest, Provider, ProviderError, ProviderReply, PurposeTag};
use crate::error::{Error, Result};
use crate::store::{CallOutcome, RunManifest};

/// Which requests a canned response answers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CannedMatcher {
    pub purpose: PurposeTag,
    /// `None` answers every request with this purpose.
    pub digest: Option<String>,
}

impl CannedMatcher {
    pub fn purpose(purpose: PurposeTag) -> Self {
        CannedMatcher { purpose, digest: None }
    }

    pub fn exact(purpose: PurposeTag, digest: impl Into<String>) -> Self {
        CannedMatcher {
            purpose,
            digest: Some(digest.into()),
        }
    }
}

/// Returned by [`MockProvider::register_canned`]; pass it back to
/// [`MockProvider::unregister`] to remove the entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationHandle {
    pub matcher: CannedMatcher,
    id: u64,
}

/// A canned answer. Failures let tests exercise retry and error paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Canned {
    Text(String),
    /// Answered with a retryable transport error every time.
    Unavailable(String),
    /// Answered with a non-retryable rejection.
    Rejected(String),
}

/// Fallback consulted when no canned entry matches.
pub trait Responder: Send + Sync {
    fn respond(&self, request: &PromptRequest) -> Option<String>;
}

#[derive(Debug)]
struct Entry {
    id: u64,
    /// Replays may hold several answers for one digest; they are served in
    /// order and the last one repeats.
    replies: Vec<Canned>,
    served: usize,
}

#[derive(Default)]
pub struct MockProvider {
    registry: Mutex<BTreeMap<CannedMatcher, Entry>>,
    fallback: Option<Arc<dyn Responder>>,
    next_id: AtomicU64,
    calls: Mutex<BTreeMap<PurposeTag, usize>>,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider")
            .field("registrations", &self.len())
            .field("fallback", &self.fallback.is_some())
            .finish()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    ByPurpose(BTreeMap<PurposeTag, String>),
    Entries(Vec<FixtureEntry>),
}

#[derive(Deserialize)]
struct FixtureEntry {
    purpose: PurposeTag,
    #[serde(default)]
    digest: Option<String>,
    text: String,
}

impl MockProvider {
    pub fn new() -> Self {
        MockProvider::default()
    }

    /// A mock that asks `responder` whenever the registry has no answer.
    pub fn with_fallback(responder: Arc<dyn Responder>) -> Self {
        MockProvider {
            fallback: Some(responder),
            ..MockProvider::default()
        }
    }

    pub fn register_canned(&self, matcher: CannedMatcher, response: impl Into<String>) -> Result<RegistrationHandle> {
        self.register(matcher, Canned::Text(response.into()))
    }

    pub fn register(&self, matcher: CannedMatcher, reply: Canned) -> Result<RegistrationHandle> {
        let mut reg = self.registry.lock().expect("registry lock poisoned");
        if reg.contains_key(&matcher) {
            return Err(Error::DuplicateRegistration(describe(&matcher)));
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        reg.insert(
            matcher.clone(),
            Entry {
                id,
                replies: vec![reply],
                served: 0,
            },
        );
        Ok(RegistrationHandle { matcher, id })
    }

    /// Returns whether the registration was still present.
    pub fn unregister(&self, handle: &RegistrationHandle) -> bool {
        let mut reg = self.registry.lock().expect("registry lock poisoned");
        match reg.get(&handle.matcher) {
            Some(e) if e.id == handle.id => {
                reg.remove(&handle.matcher);
                true
            }
            _ => false,
        }
    }

    pub fn len(&self) -> usize {
        self.registry.lock().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Requests answered so far, per purpose (including misses).
    pub fn call_count(&self, purpose: PurposeTag) -> usize {
        self.calls
            .lock()
            .expect("call counter poisoned")
            .get(&purpose)
            .copied()
            .unwrap_or(0)
    }

    /// Load a fixture file: either `{"<purpose>": "<text>", ...}` or a list of
    /// `{"purpose", "digest"?, "text"}` objects.
    pub fn load_fixture(&self, path: &Path) -> Result<usize> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: FixtureFile = serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("mock fixture {}: {e}", path.display())))?;
        let entries: Vec<(CannedMatcher, String)> = match parsed {
            FixtureFile::ByPurpose(map) => map
                .into_iter()
                .map(|(p, t)| (CannedMatcher::purpose(p), t))
                .collect(),
            FixtureFile::Entries(list) => list
                .into_iter()
                .map(|e| {
                    (
                        CannedMatcher {
                            purpose: e.purpose,
                            digest: e.digest,
                        },
                        e.text,
                    )
                })
                .collect(),
        };
        let n = entries.len();
        for (m, t) in entries {
            self.register_canned(m, t)?;
        }
        Ok(n)
    }

    /// A mock that answers every successful call of `manifest` with the
    /// response recorded there. Failed calls are registered as unavailable so
    /// a replay fails at the same points.
    pub fn from_manifest(manifest: &RunManifest) -> Self {
        let mock = MockProvider::new();
        {
            let mut reg = mock.registry.lock().expect("registry lock poisoned");
            for call in manifest.model_calls() {
                let reply = match (&call.outcome, &call.response_text) {
                    (CallOutcome::Ok { .. }, Some(text)) => Canned::Text(text.clone()),
                    (CallOutcome::Failed { error_class, message }, _) => match error_class.as_str() {
                        "ProviderUnavailable" => Canned::Unavailable(message.clone()),
                        "ProviderRejected" => Canned::Rejected(message.clone()),
                        // validation failures never reached the provider
                        _ => continue,
                    },
                    _ => continue,
                };
                let matcher = CannedMatcher::exact(call.purpose, call.request_digest.clone());
                let id = mock.next_id.fetch_add(1, Ordering::SeqCst);
                reg.entry(matcher)
                    .or_insert_with(|| Entry {
                        id,
                        replies: Vec::new(),
                        served: 0,
                    })
                    .replies
                    .push(reply);
            }
        }
        mock
    }

    fn lookup(&self, req: &PromptRequest, digest: &str) -> Option<Canned> {
        let mut reg = self.registry.lock().expect("registry lock poisoned");
        let exact = CannedMatcher::exact(req.purpose, digest);
        let key = if reg.contains_key(&exact) {
            exact
        } else {
            CannedMatcher::purpose(req.purpose)
        };
        let entry = reg.get_mut(&key)?;
        let i = entry.served.min(entry.replies.len() - 1);
        entry.served += 1;
        Some(entry.replies[i].clone())
    }
}

fn describe(m: &CannedMatcher) -> String {
    match &m.digest {
        Some(d) => format!("{} @ {d}", m.purpose),
        None => format!("{} (any digest)", m.purpose),
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, req: &PromptRequest) -> std::result::Result<ProviderReply, ProviderError> {
        *self
            .calls
            .lock()
            .expect("call counter poisoned")
            .entry(req.purpose)
            .or_default() += 1;
        let digest = req.digest();
        let canned = match self.lookup(req, &digest) {
            Some(c) => c,
            None => match self.fallback.as_ref().and_then(|f| f.respond(req)) {
                Some(text) => Canned::Text(text),
                None => {
                    return Err(ProviderError::Fatal(Error::MockMiss {
                        purpose: req.purpose.to_string(),
                        digest,
                    }))
                }
            },
        };
        match canned {
            Canned::Text(text) => Ok(ProviderReply { text, truncated: false }),
            Canned::Unavailable(m) => Err(ProviderError::Transport(m)),
            Canned::Rejected(m) => Err(ProviderError::Fatal(Error::ProviderRejected(m))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purpose_registration_answers_every_call() {
        let mock = MockProvider::new();
        mock.register_canned(CannedMatcher::purpose(PurposeTag::CodeChallenges), "R")
            .unwrap();
        for i in 0..3 {
            let req = PromptRequest::new(format!("chunk {i}"), PurposeTag::CodeChallenges);
            assert_eq!(mock.send(&req).unwrap().text, "R");
        }
        assert_eq!(mock.call_count(PurposeTag::CodeChallenges), 3);
    }

    #[test]
    fn exact_digest_wins_over_purpose() {
        let mock = MockProvider::new();
        let req = PromptRequest::new("x", PurposeTag::Other);
        mock.register_canned(CannedMatcher::purpose(PurposeTag::Other), "generic")
            .unwrap();
        mock.register_canned(CannedMatcher::exact(PurposeTag::Other, req.digest()), "specific")
            .unwrap();
        assert_eq!(mock.send(&req).unwrap().text, "specific");
        let other = PromptRequest::new("y", PurposeTag::Other);
        assert_eq!(mock.send(&other).unwrap().text, "generic");
    }

    #[test]
    fn miss_names_the_purpose() {
        let mock = MockProvider::new();
        match mock.send(&PromptRequest::new("x", PurposeTag::WritePersona)) {
            Err(ProviderError::Fatal(Error::MockMiss { purpose, .. })) => assert_eq!(purpose, "write_persona"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mock = MockProvider::new();
        let m = CannedMatcher::exact(PurposeTag::Other, "d");
        mock.register_canned(m.clone(), "a").unwrap();
        assert!(matches!(
            mock.register_canned(m, "b"),
            Err(Error::DuplicateRegistration(_))
        ));
    }

    #[test]
    fn unregister_frees_the_matcher() {
        let mock = MockProvider::new();
        let h = mock
            .register_canned(CannedMatcher::purpose(PurposeTag::Other), "a")
            .unwrap();
        assert!(mock.unregister(&h));
        assert!(!mock.unregister(&h));
        mock.register_canned(h.matcher.clone(), "b").unwrap();
    }

    #[test]
    fn fixture_file_by_purpose() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        std::fs::write(&p, r#"{"group_themes": "G", "write_persona": "P"}"#).unwrap();
        let mock = MockProvider::new();
        assert_eq!(mock.load_fixture(&p).unwrap(), 2);
        let req = PromptRequest::new("x", PurposeTag::GroupThemes);
        assert_eq!(mock.send(&req).unwrap().text, "G");
    }

    #[test]
    fn fixture_file_entry_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        let req = PromptRequest::new("x", PurposeTag::Other);
        std::fs::write(
            &p,
            format!(r#"[{{"purpose": "other", "digest": "{}", "text": "E"}}]"#, req.digest()),
        )
        .unwrap();
        let mock = MockProvider::new();
        mock.load_fixture(&p).unwrap();
        assert_eq!(mock.send(&req).unwrap().text, "E");
    }
}
