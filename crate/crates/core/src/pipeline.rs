//! Stage orchestration over a run directory.
//!
//! Each stage stores its outputs as artifacts and notes their digests in
//! `runs/<run_id>/state.json`. A stage whose outputs are already noted is
//! skipped, which is what makes re-running and resuming cheap. The review
//! decision is a hard barrier: themes are not finalized until a decision for
//! the dimension has been submitted.

use std::collections::BTreeMap;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coding::{code_corpus, reduce_codebook, reduce_with_model, CodebookArtifact, Dimension};
use crate::config::{CorpusSource, PipelineConfig, ProviderKind, ReductionMode};
use crate::corpus::{load_corpus, Corpus};
use crate::error::{Error, Result};
use crate::llm::live::LiveProvider;
use crate::llm::{Gateway, MockProvider, Provider, ScriptedResponder};
use crate::persona::{parse_persona_with, render_persona_prompt, select_tuples, validate_persona, Persona, TupleSelection};
use crate::prompts::Templates;
use crate::review::{
    apply_decisions, run_variability_tests, score_consistency, ConsistencyReport, DecisionFile, ReviewDecision,
};
use crate::store::{
    read_manifest, value_digest, write_atomic, ArtifactKind, ArtifactRecord, DecisionRecord, ManifestEvent, ManifestLog,
    Provenance, RunStore, SelectionRecord,
};
use crate::synthetic::synthetic_corpus;
use crate::theming::{group_codebook, render_grouping_prompt, ThemeBook};
use crate::trace::{trace_persona, TraceReport};

/// Stage name to the digests of the artifacts it produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RunState {
    pub stages: BTreeMap<String, Vec<String>>,
}

impl RunState {
    pub fn get(&self, stage: &str) -> Option<&[String]> {
        self.stages.get(stage).map(Vec::as_slice)
    }

    fn first(&self, stage: &str) -> Result<&str> {
        self.get(stage)
            .and_then(|d| d.first())
            .map(String::as_str)
            .ok_or_else(|| Error::InvalidRequest(format!("stage {stage} has not run")))
    }
}

pub fn stage_key(stage: &str, dim: Dimension) -> String {
    format!("{stage}:{dim}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Halted at the review gate. Resume by running again with the same
    /// run id once decisions are available.
    AwaitingDecision {
        dimensions: Vec<Dimension>,
        resume_token: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RunSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub artifacts: BTreeMap<String, Vec<String>>,
    pub model_calls: BTreeMap<String, usize>,
}

/// The provider `config` asks for. The mock answers from the fixture first
/// and falls back to the scripted responder.
pub fn build_provider(config: &PipelineConfig) -> Result<Arc<dyn Provider>> {
    match config.provider {
        ProviderKind::Live => Ok(Arc::new(LiveProvider::from_env(&config.live)?)),
        ProviderKind::Mock => {
            let mock = MockProvider::with_fallback(Arc::new(ScriptedResponder::new()));
            if let Some(path) = &config.mock_fixture {
                mock.load_fixture(path)?;
            }
            Ok(Arc::new(mock))
        }
    }
}

pub struct Pipeline {
    store: RunStore,
    run_id: String,
    config: PipelineConfig,
    templates: Templates,
    manifest: Arc<ManifestLog>,
    gateway: Gateway,
    state: RunState,
}

impl Pipeline {
    /// Create run `run_id`, or reopen it if it exists. Reopening with a
    /// configuration other than the one the run was created with is refused.
    pub fn start(store: RunStore, run_id: &str, config: PipelineConfig, provider: Arc<dyn Provider>) -> Result<Self> {
        config.validate()?;
        let templates = Templates::load(config.templates_dir.as_deref())?;
        let snapshot = config.snapshot(&templates);
        let path = store.manifest_path(run_id);
        let manifest = if store.run_exists(run_id) {
            let log = ManifestLog::open(&path)?;
            if log.snapshot().header.config != snapshot {
                return Err(Error::Config(format!(
                    "run {run_id} was created with a different configuration"
                )));
            }
            log
        } else {
            ManifestLog::create(&path, run_id, snapshot)?
        };
        let manifest = Arc::new(manifest);
        let gateway = Gateway::new(provider, manifest.clone(), config.gateway.clone());
        let state = load_state(&store, run_id)?;
        Ok(Pipeline {
            store,
            run_id: run_id.to_owned(),
            config,
            templates,
            manifest,
            gateway,
            state,
        })
    }

    /// Reopen an existing run with the configuration recorded in its manifest.
    pub fn resume(store: RunStore, run_id: &str, provider: Option<Arc<dyn Provider>>) -> Result<Self> {
        if !store.run_exists(run_id) {
            return Err(Error::UnknownRun(run_id.to_owned()));
        }
        let manifest = read_manifest(&store.manifest_path(run_id))?;
        let config = PipelineConfig::from_snapshot(&manifest.header.config)?;
        let provider = match provider {
            Some(p) => p,
            None => build_provider(&config)?,
        };
        Pipeline::start(store, run_id, config, provider)
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn manifest(&self) -> &ManifestLog {
        &self.manifest
    }

    fn mark(&mut self, stage: String, digests: Vec<String>) -> Result<()> {
        self.state.stages.insert(stage, digests);
        let body = serde_json::to_vec_pretty(&self.state).map_err(|e| Error::schema("run state", e))?;
        write_atomic(&self.store.run_dir(&self.run_id).join("state.json"), &body)
    }

    fn save<T: Serialize>(&self, kind: ArtifactKind, payload: &T, parents: Vec<String>, since: u64) -> Result<String> {
        let last = self.manifest.last_sequence();
        let provenance = Provenance {
            run_id: self.run_id.clone(),
            parents,
            entry_range: (last > since).then_some((since + 1, last)),
        };
        let digest = self.store.save(kind, payload, provenance)?;
        self.manifest.record(ManifestEvent::Artifact(ArtifactRecord {
            artifact_kind: kind.as_str().to_owned(),
            digest: digest.clone(),
        }))?;
        Ok(digest)
    }

    pub fn load<T: DeserializeOwned>(&self, digest: &str) -> Result<T> {
        self.store.load(&self.run_id, digest)
    }

    fn load_stage<T: DeserializeOwned>(&self, stage: &str) -> Result<T> {
        self.load(self.state.first(stage)?)
    }

    pub fn ingest(&mut self) -> Result<String> {
        if let Some(d) = self.state.get("ingest") {
            return Ok(d[0].clone());
        }
        let run = || -> Result<Corpus> {
            let docs = match &self.config.corpus {
                CorpusSource::Directory { path } => load_corpus(path, &self.config.cleaning)?,
                CorpusSource::Synthetic { seed } => synthetic_corpus(*seed)?,
            };
            Corpus::build(docs, self.config.chunking, self.config.gateway.tokenizer)
        };
        let corpus = run().map_err(|e| e.in_stage("ingest"))?;
        log::info!("ingested {} documents, {} chunks", corpus.documents.len(), corpus.chunks.len());
        let since = self.manifest.last_sequence();
        let digest = self.save(ArtifactKind::Corpus, &corpus, vec![], since)?;
        self.mark("ingest".into(), vec![digest.clone()])?;
        Ok(digest)
    }

    pub fn code(&mut self, dim: Dimension) -> Result<String> {
        let key = stage_key("code", dim);
        if let Some(d) = self.state.get(&key) {
            return Ok(d[0].clone());
        }
        let corpus_digest = self.ingest()?;
        let corpus: Corpus = self.load(&corpus_digest)?;
        let since = self.manifest.last_sequence();
        let coded = code_corpus(
            &self.gateway,
            &corpus,
            dim,
            &self.templates,
            &self.config.coding,
            &self.config.budget(),
        )
        .map_err(|e| e.in_stage(&key))?;
        let artifact = CodebookArtifact {
            codebook: coded.codebook,
            merge_map: None,
            warnings: coded.warnings,
        };
        let digest = self.save(ArtifactKind::Codebook, &artifact, vec![corpus_digest], since)?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    pub fn reduce(&mut self, dim: Dimension) -> Result<String> {
        let key = stage_key("reduce", dim);
        if let Some(d) = self.state.get(&key) {
            return Ok(d[0].clone());
        }
        let raw_digest = self.code(dim)?;
        let raw: CodebookArtifact = self.load(&raw_digest)?;
        let since = self.manifest.last_sequence();
        let (codebook, map, warnings) = match self.config.reduction_mode {
            ReductionMode::Lexical => {
                let (cb, map) = reduce_codebook(&raw.codebook, &self.config.reduction).map_err(|e| e.in_stage(&key))?;
                (cb, map, Vec::new())
            }
            ReductionMode::Model => reduce_with_model(&self.gateway, &raw.codebook, &self.config.budget())
                .map_err(|e| e.in_stage(&key))?,
        };
        log::info!("{dim}: {} codes reduced to {}", raw.codebook.len(), codebook.len());
        let artifact = CodebookArtifact {
            codebook,
            merge_map: Some(map),
            warnings,
        };
        let digest = self.save(ArtifactKind::Codebook, &artifact, vec![raw_digest], since)?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    pub fn theme(&mut self, dim: Dimension) -> Result<String> {
        let key = stage_key("theme", dim);
        if let Some(d) = self.state.get(&key) {
            return Ok(d[0].clone());
        }
        let reduced_digest = self.reduce(dim)?;
        let reduced: CodebookArtifact = self.load(&reduced_digest)?;
        let since = self.manifest.last_sequence();
        let mut book = render_grouping_prompt(
            &reduced.codebook,
            self.config.baseline_temperature,
            &self.config.grouping,
            &self.templates,
            &self.config.budget(),
        )
        .and_then(|prompt| group_codebook(&self.gateway, &reduced.codebook, &prompt))
        .map_err(|e| e.in_stage(&key))?;
        book.source_codebook = reduced_digest.clone();
        let digest = self.save(ArtifactKind::Themebook, &book, vec![reduced_digest], since)?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    /// Variability runs and the consistency report. Outputs the report digest
    /// followed by one digest per successful variant.
    pub fn evaluate(&mut self, dim: Dimension) -> Result<Vec<String>> {
        let key = stage_key("evaluate", dim);
        if let Some(d) = self.state.get(&key) {
            return Ok(d.to_vec());
        }
        let baseline_digest = self.theme(dim)?;
        let reduced_digest = self.state.first(&stage_key("reduce", dim))?.to_owned();
        let reduced: CodebookArtifact = self.load(&reduced_digest)?;
        let baseline: ThemeBook = self.load(&baseline_digest)?;
        let review = &self.config.review;
        let since = self.manifest.last_sequence();
        let runs = render_grouping_prompt(
            &reduced.codebook,
            review.temperature,
            &self.config.grouping,
            &self.templates,
            &self.config.budget(),
        )
        .and_then(|prompt| run_variability_tests(&self.gateway, &reduced.codebook, &prompt, review.k, review.base_seed))
        .map_err(|e| e.in_stage(&key))?;
        let mut variants = runs.books.clone();
        let mut variant_digests = Vec::new();
        for v in &mut variants {
            v.source_codebook = reduced_digest.clone();
            variant_digests.push(self.save(ArtifactKind::Themebook, v, vec![reduced_digest.clone()], since)?);
        }
        let mut report = score_consistency(&baseline, &variants, review).map_err(|e| e.in_stage(&key))?;
        report.k_requested = runs.k_requested;
        report.failed_variants = runs.failures.clone();
        let mut parents = vec![baseline_digest];
        parents.extend(variant_digests.iter().cloned());
        let report_digest = self.save(ArtifactKind::ConsistencyReport, &report, parents, since)?;
        let mut outputs = vec![report_digest];
        outputs.extend(variant_digests);
        self.mark(key, outputs.clone())?;
        Ok(outputs)
    }

    pub fn baseline(&self, dim: Dimension) -> Result<ThemeBook> {
        self.load_stage(&stage_key("theme", dim))
    }

    pub fn variants(&self, dim: Dimension) -> Result<Vec<ThemeBook>> {
        let outputs = self
            .state
            .get(&stage_key("evaluate", dim))
            .ok_or_else(|| Error::InvalidRequest(format!("{dim} themes have not been evaluated")))?;
        outputs[1..].iter().map(|d| self.load(d)).collect()
    }

    pub fn consistency_report(&self, dim: Dimension) -> Result<ConsistencyReport> {
        self.load_stage(&stage_key("evaluate", dim))
    }

    fn raw_and_reduced(&self, dim: Dimension) -> Result<(CodebookArtifact, CodebookArtifact)> {
        Ok((
            self.load_stage(&stage_key("code", dim))?,
            self.load_stage(&stage_key("reduce", dim))?,
        ))
    }

    /// Check a decision against the evaluated themes and store it. Replaces
    /// an earlier decision for the dimension unless the themes are final.
    pub fn submit_decision(&mut self, decision: &ReviewDecision) -> Result<String> {
        let dim = decision.dimension;
        let key = stage_key("decision", dim);
        if self.state.get(&stage_key("finalize", dim)).is_some() {
            return Err(Error::InvalidDecision(format!("{dim} themes are already final")));
        }
        let outputs = self.evaluate(dim)?;
        let baseline = self.baseline(dim)?;
        let variants = self.variants(dim)?;
        let report = self.consistency_report(dim)?;
        let (raw, reduced) = self.raw_and_reduced(dim)?;
        apply_decisions(
            &baseline,
            &report,
            decision,
            &variants,
            &raw.codebook,
            reduced.merge_map.as_ref().unwrap_or(&BTreeMap::new()),
        )?;
        let since = self.manifest.last_sequence();
        let digest = self.save(ArtifactKind::Decision, decision, vec![outputs[0].clone()], since)?;
        self.manifest.record(ManifestEvent::Decision(DecisionRecord {
            dimension: dim.to_string(),
            decided_by: decision.decided_by.clone(),
            decision_digest: digest.clone(),
            decision: serde_json::to_value(decision).map_err(|e| Error::schema("decision", e))?,
        }))?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    pub fn decision(&self, dim: Dimension) -> Result<Option<ReviewDecision>> {
        match self.state.get(&stage_key("decision", dim)) {
            Some(d) => self.load(&d[0]).map(Some),
            None => Ok(None),
        }
    }

    pub fn finalize(&mut self, dim: Dimension) -> Result<String> {
        let key = stage_key("finalize", dim);
        if let Some(d) = self.state.get(&key) {
            return Ok(d[0].clone());
        }
        let decision_digest = self
            .state
            .first(&stage_key("decision", dim))
            .map_err(|_| Error::IncompleteDecision(format!("no review decision submitted for {dim}")))?
            .to_owned();
        let decision: ReviewDecision = self.load(&decision_digest)?;
        let report_digest = self.evaluate(dim)?[0].clone();
        let baseline = self.baseline(dim)?;
        let variants = self.variants(dim)?;
        let report = self.consistency_report(dim)?;
        let (raw, reduced) = self.raw_and_reduced(dim)?;
        let since = self.manifest.last_sequence();
        let mut book = apply_decisions(
            &baseline,
            &report,
            &decision,
            &variants,
            &raw.codebook,
            reduced.merge_map.as_ref().unwrap_or(&BTreeMap::new()),
        )
        .map_err(|e| e.in_stage(&key))?;
        book.source_codebook = self.state.first(&stage_key("reduce", dim))?.to_owned();
        let raw_digest = self.state.first(&stage_key("code", dim))?.to_owned();
        let digest = self.save(
            ArtifactKind::Themebook,
            &book,
            vec![decision_digest, report_digest, raw_digest],
            since,
        )?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    pub fn final_book(&self, dim: Dimension) -> Result<ThemeBook> {
        self.load_stage(&stage_key("finalize", dim))
    }

    fn final_books(&self) -> Result<(ThemeBook, ThemeBook, Vec<String>)> {
        let parents = vec![
            self.state.first(&stage_key("finalize", Dimension::Need))?.to_owned(),
            self.state.first(&stage_key("finalize", Dimension::Challenge))?.to_owned(),
        ];
        Ok((self.final_book(Dimension::Need)?, self.final_book(Dimension::Challenge)?, parents))
    }

    /// Generate personas for `selections` concurrently and store them. With
    /// `strict`, a persona breaking a length or count limit is an error.
    pub fn generate_personas(&mut self, selections: &[TupleSelection], decided_by: &str, strict: bool) -> Result<Vec<String>> {
        let (needs, challenges, parents) = self.final_books()?;
        let cfg = &self.config.persona;
        let mut requests = Vec::new();
        for sel in selections {
            self.manifest.record(ManifestEvent::Selection(SelectionRecord {
                decided_by: decided_by.to_owned(),
                selection: serde_json::to_value(sel).map_err(|e| Error::schema("selection", e))?,
            }))?;
            let prompt = render_persona_prompt(sel, &needs, &challenges, cfg, &self.templates, &self.config.budget())?;
            for w in &prompt.warnings {
                log::warn!("persona prompt: {}", w.detail);
            }
            requests.push(prompt.request);
        }
        let since = self.manifest.last_sequence();
        let completions = self.gateway.complete_batch(&requests);
        let mut digests = Vec::new();
        for (sel, completion) in selections.iter().zip(completions) {
            let mut persona = parse_persona_with(&completion?, sel, cfg)?;
            let report = validate_persona(&persona, strict);
            if report.has_errors() {
                return Err(Error::InvalidRequest(format!(
                    "persona {} breaks: {}",
                    persona.name,
                    report.rules().join(", ")
                )));
            }
            persona.validation = report.findings;
            digests.push(self.save(ArtifactKind::Persona, &persona, parents.clone(), since)?);
        }
        Ok(digests)
    }

    /// The configured number of randomly selected personas; persona `i`
    /// draws its themes with seed `config.seed + i`.
    pub fn personas(&mut self) -> Result<Vec<String>> {
        let key = "persona".to_owned();
        if let Some(d) = self.state.get(&key) {
            return Ok(d.to_vec());
        }
        let (needs, challenges, _) = self.final_books()?;
        let cfg = &self.config.persona;
        let selections = (0..cfg.count as u64)
            .map(|i| select_tuples(&needs, &challenges, self.config.seed + i, cfg.mode))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("persona"))?;
        let digests = self
            .generate_personas(&selections, "pipeline", self.config.persona.strict)
            .map_err(|e| e.in_stage("persona"))?;
        self.mark(key, digests.clone())?;
        Ok(digests)
    }

    pub fn trace(&mut self, persona_digest: &str) -> Result<String> {
        let key = format!("trace:{persona_digest}");
        if let Some(d) = self.state.get(&key) {
            return Ok(d[0].clone());
        }
        let persona: Persona = self.load(persona_digest)?;
        let (needs, challenges, _) = self.final_books()?;
        let report: TraceReport = trace_persona(&persona, &needs, &challenges, &self.config.trace)?;
        if !report.unmatched_elements.is_empty() {
            log::warn!(
                "persona {}: {} element(s) not traceable to any code",
                persona.name,
                report.unmatched_elements.len()
            );
        }
        let since = self.manifest.last_sequence();
        let digest = self.save(ArtifactKind::TraceReport, &report, vec![persona_digest.to_owned()], since)?;
        self.mark(key, vec![digest.clone()])?;
        Ok(digest)
    }

    /// Run every stage that has not run yet. Decisions in `decisions` are
    /// submitted for dimensions that lack one; without a decision for every
    /// dimension the run halts at the review gate.
    pub fn run(&mut self, decisions: Option<&DecisionFile>) -> Result<RunSummary> {
        self.ingest()?;
        for dim in Dimension::ALL {
            self.evaluate(dim)?;
        }
        let mut waiting = Vec::new();
        for dim in Dimension::ALL {
            if self.state.get(&stage_key("decision", dim)).is_some() || self.state.get(&stage_key("finalize", dim)).is_some() {
                continue;
            }
            match decisions.and_then(|f| f.get(dim)) {
                Some(d) => {
                    self.submit_decision(d).map_err(|e| e.in_stage(stage_key("decision", dim)))?;
                }
                None => waiting.push(dim),
            }
        }
        if !waiting.is_empty() {
            return Ok(self.summary(RunStatus::AwaitingDecision {
                dimensions: waiting,
                resume_token: self.run_id.clone(),
            }));
        }
        for dim in Dimension::ALL {
            self.finalize(dim)?;
        }
        for p in self.personas()? {
            self.trace(&p).map_err(|e| e.in_stage("trace"))?;
        }
        Ok(self.summary(RunStatus::Completed))
    }

    pub fn summary(&self, status: RunStatus) -> RunSummary {
        let manifest = self.manifest.snapshot();
        let mut model_calls = BTreeMap::new();
        for call in manifest.model_calls() {
            *model_calls.entry(call.purpose.to_string()).or_insert(0) += 1;
        }
        RunSummary {
            run_id: self.run_id.clone(),
            status,
            artifacts: self.state.stages.clone(),
            model_calls,
        }
    }
}

pub fn load_state(store: &RunStore, run_id: &str) -> Result<RunState> {
    let path = store.run_dir(run_id).join("state.json");
    if !path.exists() {
        return Ok(RunState::default());
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::schema("run state", e))
}

/// The decisions a run recorded, in a form [`Pipeline::run`] accepts.
pub fn recorded_decisions(store: &RunStore, run_id: &str) -> Result<DecisionFile> {
    let state = load_state(store, run_id)?;
    let mut decisions = Vec::new();
    for dim in Dimension::ALL {
        if let Some(d) = state.get(&stage_key("decision", dim)) {
            decisions.push(store.load::<ReviewDecision>(run_id, &d[0])?);
        }
    }
    Ok(DecisionFile { decisions })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StageComparison {
    pub stage: String,
    pub original: Vec<String>,
    pub replayed: Vec<String>,
}

impl StageComparison {
    pub fn matches(&self) -> bool {
        self.original == self.replayed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ReplayReport {
    pub source_run: String,
    pub replay_run: String,
    pub stages: Vec<StageComparison>,
}

impl ReplayReport {
    pub fn all_match(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(StageComparison::matches)
    }
}

/// Re-run `source_run` into `replay_run` with every model answer served
/// from the source manifest, and compare the artifact digests stage by stage.
pub fn replay_run(store: &RunStore, source_run: &str, replay_run: &str) -> Result<ReplayReport> {
    if !store.run_exists(source_run) {
        return Err(Error::UnknownRun(source_run.to_owned()));
    }
    let manifest = read_manifest(&store.manifest_path(source_run))?;
    let config = PipelineConfig::from_snapshot(&manifest.header.config)?;
    let provider: Arc<dyn Provider> = Arc::new(MockProvider::from_manifest(&manifest));
    let decisions = recorded_decisions(store, source_run)?;
    let original = load_state(store, source_run)?;
    let mut pipeline = Pipeline::start(store.clone(), replay_run, config, provider)?;
    pipeline.run(Some(&decisions))?;
    let replayed = pipeline.state().clone();
    let stages = original
        .stages
        .iter()
        .map(|(stage, digests)| StageComparison {
            stage: stage.clone(),
            original: digests.clone(),
            replayed: replayed.stages.get(stage).cloned().unwrap_or_default(),
        })
        .collect();
    Ok(ReplayReport {
        source_run: source_run.to_owned(),
        replay_run: replay_run.to_owned(),
        stages,
    })
}

/// Digest of everything a run produced, for comparing runs at a glance.
pub fn state_digest(state: &RunState) -> String {
    value_digest(&state.stages)
}
