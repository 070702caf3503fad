//! Provider-agnostic chat completion.
//!
//! [`Gateway`] is the only way the pipeline talks to a model. It enforces the
//! context budget, retries transient failures, bounds concurrency and writes
//! every call to the run manifest. Providers are interchangeable: the
//! OpenAI-compatible HTTP client in [`live`], or the offline [`mock`].

pub mod gateway;
pub mod live;
pub mod mock;
pub mod scripted;

use std::collections::BTreeMap;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::store::value_digest;

pub use gateway::{Gateway, GatewayConfig, RetryPolicy};
pub use live::{LiveConfig, LiveProvider};
pub use mock::{Canned, CannedMatcher, MockProvider, RegistrationHandle, Responder};
pub use scripted::ScriptedResponder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PurposeTag {
    CodeChallenges,
    CodeNeeds,
    GroupThemes,
    VariabilityTest,
    WritePersona,
    Other,
}

impl PurposeTag {
    pub const ALL: [PurposeTag; 6] = [
        PurposeTag::CodeChallenges,
        PurposeTag::CodeNeeds,
        PurposeTag::GroupThemes,
        PurposeTag::VariabilityTest,
        PurposeTag::WritePersona,
        PurposeTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PurposeTag::CodeChallenges => "code_challenges",
            PurposeTag::CodeNeeds => "code_needs",
            PurposeTag::GroupThemes => "group_themes",
            PurposeTag::VariabilityTest => "variability_test",
            PurposeTag::WritePersona => "write_persona",
            PurposeTag::Other => "other",
        }
    }
}

impl fmt::Display for PurposeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PurposeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PurposeTag::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown purpose tag {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PromptRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_response_tokens: usize,
    pub model_name: String,
    pub purpose: PurposeTag,
    /// Sampling seed forwarded to the provider. Repeated runs of the same
    /// prompt (variability tests) differ only here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Extra facts recorded with the call, e.g. the topic numbering of a
    /// grouping prompt.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl PromptRequest {
    pub fn new(prompt_text: impl Into<String>, purpose: PurposeTag) -> Self {
        PromptRequest {
            prompt_text: prompt_text.into(),
            temperature: 0.0,
            max_response_tokens: 1000,
            model_name: String::new(),
            purpose,
            seed: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_response_tokens(mut self, n: usize) -> Self {
        self.max_response_tokens = n;
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Content hash of the whole request.
    pub fn digest(&self) -> String {
        value_digest(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Completion {
    pub request_digest: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub provider: String,
    /// The provider stopped because it hit the response token limit.
    #[serde(default)]
    pub truncated: bool,
}

impl Completion {
    /// A completion for `text` that did not come from a provider (fixtures, replays).
    pub fn offline(request_digest: impl Into<String>, text: impl Into<String>) -> Self {
        Completion {
            request_digest: request_digest.into(),
            response_text: text.into(),
            latency_ms: 0,
            provider: "offline".into(),
            truncated: false,
        }
    }
}

/// What a provider returns for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug)]
pub enum ProviderError {
    /// Connection failure, timeout or 5xx. Retried.
    Transport(String),
    /// 429 or equivalent. Retried.
    RateLimited(String),
    /// Not retried.
    Fatal(Error),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited(_))
    }
}

impl fmt::Display for ProviderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderError::Transport(m) => write!(f, "transport: {m}"),
            ProviderError::RateLimited(m) => write!(f, "rate limited: {m}"),
            ProviderError::Fatal(e) => write!(f, "{e}"),
        }
    }
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &PromptRequest) -> Result<ProviderReply, ProviderError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_covers_every_field() {
        let base = PromptRequest::new("p", PurposeTag::Other).with_model("m");
        let d = base.digest();
        assert_eq!(d, base.clone().digest());
        assert_ne!(d, base.clone().with_temperature(0.5).digest());
        assert_ne!(d, base.clone().with_seed(Some(1)).digest());
        assert_ne!(d, base.clone().with_metadata("k", "v").digest());
        assert_ne!(d, base.clone().with_max_response_tokens(5).digest());
    }

    #[test]
    fn purpose_tags_round_trip_through_strings() {
        for p in PurposeTag::ALL {
            assert_eq!(p.as_str().parse::<PurposeTag>().unwrap(), p);
        }
    }
}
