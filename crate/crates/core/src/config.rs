//! Run configuration, loaded from TOML. Every command-line flag has a field here.

use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::coding::{CodingConfig, ReductionConfig};
use crate::corpus::{ChunkPolicy, CleaningPolicy};
use crate::error::{Error, Result};
use crate::llm::live::LiveConfig;
use crate::llm::GatewayConfig;
use crate::persona::PersonaConfig;
use crate::prompts::{Budget, Templates};
use crate::review::ReviewConfig;
use crate::theming::GroupingConfig;
use crate::trace::TraceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Live,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "live" => Ok(ProviderKind::Live),
            other => Err(Error::Config(format!("unknown provider {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSource {
    /// A directory of `.txt` transcripts.
    Directory { path: PathBuf },
    /// The built-in synthetic interviews.
    Synthetic { seed: u64 },
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synthetic {
            seed: crate::synthetic::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Merge codes with near-identical names.
    #[default]
    Lexical,
    /// Ask the model which codes are duplicates.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus: CorpusSource,
    pub chunking: ChunkPolicy,
    pub cleaning: CleaningPolicy,
    /// Directory of template overrides.
    pub templates_dir: Option<PathBuf>,
    pub provider: ProviderKind,
    /// Canned responses for the mock provider, consulted before the scripted fallback.
    pub mock_fixture: Option<PathBuf>,
    pub live: LiveConfig,
    pub gateway: GatewayConfig,
    pub coding: CodingConfig,
    pub reduction: ReductionConfig,
    pub reduction_mode: ReductionMode,
    pub grouping: GroupingConfig,
    /// Temperature of the baseline grouping.
    pub baseline_temperature: f64,
    pub review: ReviewConfig,
    pub persona: PersonaConfig,
    /// Persona `i` selects its themes with seed `seed + i`.
    pub seed: u64,
    pub trace: TraceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus: CorpusSource::default(),
            chunking: ChunkPolicy::default(),
            cleaning: CleaningPolicy::default(),
            templates_dir: None,
            provider: ProviderKind::Mock,
            mock_fixture: None,
            live: LiveConfig::default(),
            gateway: GatewayConfig::default(),
            coding: CodingConfig::default(),
            reduction: ReductionConfig::default(),
            reduction_mode: ReductionMode::Lexical,
            grouping: GroupingConfig::default(),
            baseline_temperature: 0.0,
            review: ReviewConfig::default(),
            persona: PersonaConfig::default(),
            seed: 42,
            trace: TraceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn budget(&self) -> Budget {
        Budget {
            tokenizer: self.gateway.tokenizer,
            context_limit: self.gateway.context_limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chunking.validate()?;
        if self.chunking.model_context_limit != self.gateway.context_limit {
            return Err(Error::Config(format!(
                "chunking.model_context_limit {} differs from gateway.context_limit {}",
                self.chunking.model_context_limit, self.gateway.context_limit
            )));
        }
        if self.review.k == 0 {
            return Err(Error::Config("review.k must be positive".into()));
        }
        if self.grouping.n_groups == 0 {
            return Err(Error::Config("grouping.n_groups must be positive".into()));
        }
        Ok(())
    }

    /// What goes into the manifest header: the effective configuration and
    /// the digest of every prompt template in use.
    pub fn snapshot(&self, templates: &Templates) -> serde_json::Value {
        serde_json::json!({
            "config": self,
            "template_digests": templates.digests(),
        })
    }

    /// Recover the configuration from a manifest header snapshot.
    pub fn from_snapshot(snapshot: &serde_json::Value) -> Result<Self> {
        let config = snapshot
            .get("config")
            .ok_or_else(|| Error::schema("config snapshot", "no config field"))?;
        serde_json::from_value(config.clone()).map_err(|e| Error::schema("config snapshot", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut c = PipelineConfig {
            corpus: CorpusSource::Directory { path: "data".into() },
            ..Default::default()
        };
        c.review.k = 5;
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = PipelineConfig::from_toml("seed = 9\n[review]\nk = 4\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.review.k, 4);
        assert_eq!(c.review.temperature, 0.5);
        assert_eq!(c.grouping.n_groups, 12);
    }

    #[test]
    fn snapshot_round_trip() {
        let c = PipelineConfig::default();
        let snap = c.snapshot(&Templates::builtin());
        assert_eq!(PipelineConfig::from_snapshot(&snap).unwrap(), c);
        assert_eq!(snap["template_digests"].as_object().unwrap().len(), 4);
    }
}
