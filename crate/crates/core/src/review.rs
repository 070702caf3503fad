//! Theme review: variability runs at raised temperature, consistency scoring
//! against the baseline, and application of the analyst's decisions.
//!
//! Scores are advice. Nothing here changes a theme book without a
//! [`ReviewDecision`] that covers every baseline theme.

use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::coding::{Codebook, Dimension, MergeMap};
use crate::error::{Error, Result};
use crate::llm::Gateway;
use crate::text::{content_tokens, jaccard};
use crate::theming::{expanded, parse_theme_groups, GroupingPrompt, Theme, ThemeBook, ThemeStage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ReviewConfig {
    /// Number of variability runs.
    pub k: usize,
    pub temperature: f64,
    /// Name-token Jaccard at or above which two themes match.
    pub match_threshold: f64,
    /// One-code themes scoring below this are flagged weak.
    pub keep_threshold: f64,
    /// Variant `i` is sampled with seed `base_seed + i`.
    pub base_seed: u64,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            k: 3,
            temperature: 0.5,
            match_threshold: 0.5,
            keep_threshold: 0.5,
            base_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct VariantFailure {
    pub variant_index: usize,
    pub error_class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityRuns {
    pub books: Vec<ThemeBook>,
    pub failures: Vec<VariantFailure>,
    pub k_requested: usize,
}

impl VariabilityRuns {
    pub fn k_effective(&self) -> usize {
        self.books.len()
    }
}

/// Run `k` grouping passes of `prompt` (already rendered at the test
/// temperature), each with its own seed. A failed pass is recorded and left
/// out rather than aborting the others.
pub fn run_variability_tests(
    gateway: &Gateway,
    cb: &Codebook,
    prompt: &GroupingPrompt,
    k: usize,
    base_seed: u64,
) -> Result<VariabilityRuns> {
    if k == 0 {
        return Err(Error::InvalidRequest("k must be positive".into()));
    }
    let prompts: Vec<GroupingPrompt> = (1..=k)
        .map(|i| prompt.clone().for_variant(i, base_seed + i as u64))
        .collect();
    let requests: Vec<_> = prompts.iter().map(|p| p.request.clone()).collect();
    let completions = gateway.complete_batch(&requests);
    let mut books = Vec::new();
    let mut failures = Vec::new();
    for (p, completion) in prompts.iter().zip(completions) {
        let index = p.variant_index.expect("variant prompt");
        match completion.and_then(|c| parse_theme_groups(&c, cb, p)) {
            Ok(book) => books.push(book),
            Err(e) => {
                log::warn!("variability run {index} failed: {e}");
                failures.push(VariantFailure {
                    variant_index: index,
                    error_class: e.class().to_owned(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(VariabilityRuns {
        books,
        failures,
        k_requested: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ThemeScore {
    pub theme_id: String,
    pub name: String,
    pub code_count: usize,
    /// Matched variant theme per variant, in variant order.
    pub matches_per_variant: Vec<Option<String>>,
    pub similarity_per_variant: Vec<Option<f64>>,
    pub consistency_score: f64,
    pub weak_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReplacementCandidate {
    pub name: String,
    pub description: String,
    /// One theme id per variant that produced it.
    pub theme_ids: Vec<String>,
    pub code_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConsistencyReport {
    pub dimension: Dimension,
    /// Digest of the baseline theme book artifact.
    #[serde(default)]
    pub baseline: String,
    /// Digests of the variant theme book artifacts.
    #[serde(default)]
    pub variants: Vec<String>,
    pub k_requested: usize,
    pub k_effective: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_variants: Vec<VariantFailure>,
    pub match_threshold: f64,
    pub keep_threshold: f64,
    pub rows: Vec<ThemeScore>,
    pub replacement_candidates: Vec<ReplacementCandidate>,
}

impl ConsistencyReport {
    pub fn row(&self, theme_id: &str) -> Option<&ThemeScore> {
        self.rows.iter().find(|r| r.theme_id == theme_id)
    }
}

/// Name similarity used for matching, with description similarity as tiebreak.
pub fn theme_similarity(a: &Theme, b: &Theme) -> (f64, f64) {
    (
        jaccard(&content_tokens(&a.name), &content_tokens(&b.name)),
        jaccard(&content_tokens(&a.description), &content_tokens(&b.description)),
    )
}

/// Greedy one-to-one matching of baseline themes to one variant's themes.
/// Returns, per baseline theme, the matched variant theme index and score.
fn match_variant(baseline: &[Theme], variant: &[Theme], threshold: f64) -> Vec<Option<(usize, f64)>> {
    let mut pairs = Vec::new();
    for (bi, b) in baseline.iter().enumerate() {
        for (vi, v) in variant.iter().enumerate() {
            let (name, desc) = theme_similarity(b, v);
            if name >= threshold {
                pairs.push((name, desc, bi, vi));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(y.1.total_cmp(&x.1))
            .then(x.2.cmp(&y.2))
            .then(x.3.cmp(&y.3))
    });
    let mut out = vec![None; baseline.len()];
    let mut used = BTreeSet::new();
    for (name, _, bi, vi) in pairs {
        if out[bi].is_none() && !used.contains(&vi) {
            out[bi] = Some((vi, name));
            used.insert(vi);
        }
    }
    out
}

/// Overlap coefficient of name tokens: a short label contained in a longer
/// one ("Reliability" in "Reliability of Digital Sources") counts as the same.
fn name_overlap(a: &Theme, b: &Theme) -> f64 {
    let (x, y) = (content_tokens(&a.name), content_tokens(&b.name));
    let smaller = x.len().min(y.len());
    if smaller == 0 {
        return 0.0;
    }
    x.intersection(&y).count() as f64 / smaller as f64
}

pub fn score_consistency(baseline: &ThemeBook, variants: &[ThemeBook], config: &ReviewConfig) -> Result<ConsistencyReport> {
    for v in variants {
        if v.dimension != baseline.dimension {
            return Err(Error::DimensionMismatch {
                expected: baseline.dimension.to_string(),
                found: v.dimension.to_string(),
            });
        }
    }
    let k = variants.len();
    let per_variant: Vec<Vec<Option<(usize, f64)>>> = variants
        .iter()
        .map(|v| match_variant(&baseline.themes, &v.themes, config.match_threshold))
        .collect();

    let rows = baseline
        .themes
        .iter()
        .enumerate()
        .map(|(bi, t)| {
            let matches: Vec<Option<(usize, f64)>> = per_variant.iter().map(|m| m[bi]).collect();
            let hits = matches.iter().filter(|m| m.is_some()).count();
            let score = if k == 0 { 0.0 } else { hits as f64 / k as f64 };
            ThemeScore {
                theme_id: t.theme_id.clone(),
                name: t.name.clone(),
                code_count: t.code_count,
                matches_per_variant: matches
                    .iter()
                    .zip(variants)
                    .map(|(m, v)| m.map(|(vi, _)| v.themes[vi].theme_id.clone()))
                    .collect(),
                similarity_per_variant: matches.iter().map(|m| m.map(|(_, s)| s)).collect(),
                consistency_score: score,
                weak_flag: t.code_count == 1 && score < config.keep_threshold,
            }
        })
        .collect();

    // Variant themes no baseline theme claimed, clustered across variants.
    let mut unmatched: Vec<(usize, &Theme)> = Vec::new();
    for (vi, (v, matches)) in variants.iter().zip(&per_variant).enumerate() {
        let claimed: BTreeSet<usize> = matches.iter().flatten().map(|(i, _)| *i).collect();
        for (ti, t) in v.themes.iter().enumerate() {
            if !claimed.contains(&ti) {
                unmatched.push((vi, t));
            }
        }
    }
    let mut parent: Vec<usize> = (0..unmatched.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            i = p[i];
        }
        i
    }
    for i in 0..unmatched.len() {
        for j in i + 1..unmatched.len() {
            if unmatched[i].0 != unmatched[j].0 && name_overlap(unmatched[i].1, unmatched[j].1) >= config.match_threshold {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..unmatched.len() {
        let r = root(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    let replacement_candidates = clusters
        .into_values()
        .filter(|members| {
            members
                .iter()
                .map(|&i| unmatched[i].0)
                .collect::<BTreeSet<_>>()
                .len()
                >= 2
        })
        .map(|members| {
            let first = unmatched[members[0]].1;
            ReplacementCandidate {
                name: first.name.clone(),
                description: first.description.clone(),
                theme_ids: members.iter().map(|&i| unmatched[i].1.theme_id.clone()).collect(),
                code_counts: members.iter().map(|&i| unmatched[i].1.code_count).collect(),
            }
        })
        .collect();

    Ok(ConsistencyReport {
        dimension: baseline.dimension,
        baseline: String::new(),
        variants: Vec::new(),
        k_requested: k,
        k_effective: k,
        failed_variants: Vec::new(),
        match_threshold: config.match_threshold,
        keep_threshold: config.keep_threshold,
        rows,
        replacement_candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Keep,
    Replace,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ThemeAction {
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_theme_id: Option<String>,
    /// Variant theme id replacing the baseline theme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<String>,
}

impl ThemeAction {
    pub fn keep(id: impl Into<String>) -> Self {
        ThemeAction {
            action: ActionKind::Keep,
            baseline_theme_id: Some(id.into()),
            replacement: None,
        }
    }

    pub fn drop(id: impl Into<String>) -> Self {
        ThemeAction {
            action: ActionKind::Drop,
            baseline_theme_id: Some(id.into()),
            replacement: None,
        }
    }

    pub fn replace(id: impl Into<String>, with: impl Into<String>) -> Self {
        ThemeAction {
            action: ActionKind::Replace,
            baseline_theme_id: Some(id.into()),
            replacement: Some(with.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ReviewDecision {
    pub dimension: Dimension,
    pub actions: Vec<ThemeAction>,
    #[serde(default)]
    pub analyst_note: String,
    pub decided_by: String,
}

impl ReviewDecision {
    /// Keep every baseline theme.
    pub fn keep_all(baseline: &ThemeBook, decided_by: impl Into<String>) -> Self {
        ReviewDecision {
            dimension: baseline.dimension,
            actions: baseline.themes.iter().map(|t| ThemeAction::keep(&t.theme_id)).collect(),
            analyst_note: String::new(),
            decided_by: decided_by.into(),
        }
    }
}

/// The human-editable decision file: one or more decisions, one per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct DecisionFile {
    pub decisions: Vec<ReviewDecision>,
}

impl DecisionFile {
    /// Accepts a `[[decisions]]` table array or a single bare decision.
    pub fn from_toml(text: &str) -> Result<Self> {
        if let Ok(file) = toml::from_str::<DecisionFile>(text) {
            return Ok(file);
        }
        toml::from_str::<ReviewDecision>(text)
            .map(|d| DecisionFile { decisions: vec![d] })
            .map_err(|e| Error::InvalidDecision(format!("decision file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("decisions serialize to toml")
    }

    pub fn get(&self, dimension: Dimension) -> Option<&ReviewDecision> {
        self.decisions.iter().find(|d| d.dimension == dimension)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// A baseline theme has no action.
    Uncovered,
    UnknownBaselineTheme,
    UnknownReplacement,
    MissingReplacement,
    UnexpectedReplacement,
    MissingBaselineTheme,
    DuplicateAction,
    DuplicateReplacement,
    DimensionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ActionDiagnostic {
    /// Index into `actions`; absent for problems not tied to one action.
    pub action_index: Option<usize>,
    pub theme_id: Option<String>,
    pub kind: DiagnosticKind,
    pub detail: String,
}

fn find_variant_theme<'a>(variants: &'a [ThemeBook], id: &str) -> Option<&'a Theme> {
    variants.iter().find_map(|v| v.get(id))
}

/// Every problem with `decision`, empty if it can be applied.
pub fn validate_decision(decision: &ReviewDecision, baseline: &ThemeBook, variants: &[ThemeBook]) -> Vec<ActionDiagnostic> {
    let mut out = Vec::new();
    if decision.dimension != baseline.dimension {
        out.push(ActionDiagnostic {
            action_index: None,
            theme_id: None,
            kind: DiagnosticKind::DimensionMismatch,
            detail: format!("decision is for {}, baseline is {}", decision.dimension, baseline.dimension),
        });
    }
    let mut seen = BTreeSet::new();
    let mut replacements = BTreeSet::new();
    for (i, a) in decision.actions.iter().enumerate() {
        let diag = |kind, detail: String| ActionDiagnostic {
            action_index: Some(i),
            theme_id: a.baseline_theme_id.clone(),
            kind,
            detail,
        };
        let Some(id) = &a.baseline_theme_id else {
            out.push(diag(DiagnosticKind::MissingBaselineTheme, "action names no baseline theme".into()));
            continue;
        };
        if baseline.get(id).is_none() {
            out.push(diag(DiagnosticKind::UnknownBaselineTheme, format!("{id} is not a baseline theme")));
        }
        if !seen.insert(id.clone()) {
            out.push(diag(DiagnosticKind::DuplicateAction, format!("{id} has more than one action")));
        }
        match (a.action, &a.replacement) {
            (ActionKind::Replace, None) => {
                out.push(diag(DiagnosticKind::MissingReplacement, format!("replacing {id} needs a variant theme")))
            }
            (ActionKind::Replace, Some(r)) => {
                if find_variant_theme(variants, r).is_none() {
                    out.push(diag(DiagnosticKind::UnknownReplacement, format!("{r} is not a variant theme")));
                } else if !replacements.insert(r.clone()) {
                    out.push(diag(DiagnosticKind::DuplicateReplacement, format!("{r} replaces more than one theme")));
                }
            }
            (_, Some(r)) => out.push(diag(
                DiagnosticKind::UnexpectedReplacement,
                format!("{:?} action on {id} must not name a replacement ({r})", a.action).to_lowercase(),
            )),
            (_, None) => {}
        }
    }
    for t in &baseline.themes {
        if !seen.contains(&t.theme_id) {
            out.push(ActionDiagnostic {
                action_index: None,
                theme_id: Some(t.theme_id.clone()),
                kind: DiagnosticKind::Uncovered,
                detail: format!("baseline theme {} ({}) has no action", t.theme_id, t.name),
            });
        }
    }
    out
}

fn diagnostics_error(diags: &[ActionDiagnostic]) -> Option<Error> {
    let first = |k: &[DiagnosticKind]| diags.iter().find(|d| k.contains(&d.kind));
    if let Some(d) = first(&[DiagnosticKind::DimensionMismatch]) {
        return Some(Error::InvalidDecision(d.detail.clone()));
    }
    let uncovered: Vec<&str> = diags
        .iter()
        .filter(|d| d.kind == DiagnosticKind::Uncovered)
        .filter_map(|d| d.theme_id.as_deref())
        .collect();
    if !uncovered.is_empty() {
        return Some(Error::IncompleteDecision(format!("no action for {}", uncovered.join(", "))));
    }
    if let Some(d) = first(&[DiagnosticKind::UnknownBaselineTheme]) {
        return Some(Error::UnknownTheme(d.theme_id.clone().unwrap_or_default()));
    }
    if let Some(d) = first(&[DiagnosticKind::UnknownReplacement]) {
        return Some(Error::UnknownTheme(d.detail.split(' ').next().unwrap_or_default().to_owned()));
    }
    diags.first().map(|d| Error::InvalidDecision(d.detail.clone()))
}

/// Build the final theme book: kept themes and replacements in baseline
/// order, each expanded to its raw codes.
pub fn apply_decisions(
    baseline: &ThemeBook,
    report: &ConsistencyReport,
    decision: &ReviewDecision,
    variants: &[ThemeBook],
    raw_cb: &Codebook,
    merge_map: &MergeMap,
) -> Result<ThemeBook> {
    if report.dimension != baseline.dimension || raw_cb.dimension != baseline.dimension {
        return Err(Error::DimensionMismatch {
            expected: baseline.dimension.to_string(),
            found: format!("report {} / codebook {}", report.dimension, raw_cb.dimension),
        });
    }
    if let Some(e) = diagnostics_error(&validate_decision(decision, baseline, variants)) {
        return Err(e);
    }
    let by_id: BTreeMap<&str, &ThemeAction> = decision
        .actions
        .iter()
        .filter_map(|a| a.baseline_theme_id.as_deref().map(|id| (id, a)))
        .collect();
    let mut themes = Vec::new();
    for t in &baseline.themes {
        let action = by_id[t.theme_id.as_str()];
        match action.action {
            ActionKind::Keep => themes.push(expanded(t, raw_cb, merge_map)?),
            ActionKind::Drop => {}
            ActionKind::Replace => {
                let r = action.replacement.as_deref().expect("validated");
                let v = find_variant_theme(variants, r).expect("validated");
                themes.push(expanded(v, raw_cb, merge_map)?);
            }
        }
    }
    if themes.is_empty() {
        return Err(Error::InvalidDecision("every theme was dropped".into()));
    }
    let covered: BTreeSet<&String> = themes.iter().flat_map(|t| &t.member_code_ids).collect();
    Ok(ThemeBook {
        dimension: baseline.dimension,
        stage: ThemeStage::Final,
        temperature_used: baseline.temperature_used,
        source_codebook: baseline.source_codebook.clone(),
        variant_index: None,
        uncovered_code_ids: baseline
            .numbering
            .iter()
            .filter(|id| !covered.contains(id))
            .cloned()
            .collect(),
        numbering: baseline.numbering.clone(),
        themes,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theme(id: &str, name: &str, codes: &[&str]) -> Theme {
        Theme {
            theme_id: id.into(),
            dimension: Dimension::Challenge,
            name: name.into(),
            description: String::new(),
            member_code_ids: codes.iter().map(|s| s.to_string()).collect(),
            code_count: codes.len(),
            weak_candidate: codes.len() == 1,
            rows: vec![],
        }
    }

    fn book(stage: ThemeStage, themes: Vec<Theme>) -> ThemeBook {
        ThemeBook {
            dimension: Dimension::Challenge,
            stage,
            temperature_used: 0.0,
            source_codebook: String::new(),
            variant_index: None,
            themes,
            uncovered_code_ids: vec![],
            numbering: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn self_match_scores_one_without_candidates() {
        let b = book(
            ThemeStage::Baseline,
            vec![theme("b1", "Weather Risks", &["c1"]), theme("b2", "Machinery Costs", &["c2", "c3"])],
        );
        let r = score_consistency(&b, &[b.clone(), b.clone(), b.clone()], &ReviewConfig::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.consistency_score == 1.0 && !row.weak_flag));
        assert!(r.replacement_candidates.is_empty());
    }

    #[test]
    fn one_code_theme_matched_everywhere_is_not_weak() {
        let b = book(ThemeStage::Baseline, vec![theme("b1", "Language Barriers", &["c1"])]);
        let v = book(ThemeStage::Variant, vec![theme("v1", "Language Barriers", &["c1"])]);
        let r = score_consistency(&b, &[v.clone(), v.clone(), v], &ReviewConfig::default()).unwrap();
        assert_eq!(r.rows[0].consistency_score, 1.0);
        assert!(!r.rows[0].weak_flag);
    }

    #[test]
    fn matching_is_one_to_one() {
        let b = book(
            ThemeStage::Baseline,
            vec![theme("b1", "Digital Tools", &["c1", "c2"]), theme("b2", "Digital Tools Use", &["c3", "c4"])],
        );
        let v = book(ThemeStage::Variant, vec![theme("v1", "Digital Tools", &["c1"])]);
        let r = score_consistency(&b, &[v], &ReviewConfig::default()).unwrap();
        assert_eq!(r.rows[0].matches_per_variant, [Some("v1".to_string())]);
        assert_eq!(r.rows[1].matches_per_variant, [None]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let b = book(ThemeStage::Baseline, vec![theme("b1", "x", &["c"])]);
        let mut v = b.clone();
        v.dimension = Dimension::Need;
        assert!(matches!(
            score_consistency(&b, &[v], &ReviewConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn decision_toml_round_trip() {
        let file = DecisionFile {
            decisions: vec![ReviewDecision {
                dimension: Dimension::Challenge,
                actions: vec![ThemeAction::keep("a"), ThemeAction::replace("b", "v-3")],
                analyst_note: "reliability recurs".into(),
                decided_by: "analyst".into(),
            }],
        };
        let text = file.to_toml();
        assert_eq!(DecisionFile::from_toml(&text).unwrap(), file);
        let bare = "dimension = \"need\"\ndecided_by = \"x\"\n[[actions]]\naction = \"keep\"\nbaseline_theme_id = \"n1\"\n";
        let parsed = DecisionFile::from_toml(bare).unwrap();
        assert_eq!(parsed.decisions[0].dimension, Dimension::Need);
    }

    #[test]
    fn partial_decision_is_incomplete() {
        let b = book(ThemeStage::Baseline, vec![theme("b1", "x", &["c"]), theme("b2", "y", &["c"])]);
        let d = ReviewDecision {
            dimension: Dimension::Challenge,
            actions: vec![ThemeAction::keep("b1")],
            analyst_note: String::new(),
            decided_by: "a".into(),
        };
        let diags = validate_decision(&d, &b, &[]);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::Uncovered);
        assert!(matches!(diagnostics_error(&diags), Some(Error::IncompleteDecision(_))));
    }

    #[test]
    fn dangling_replacement_is_unknown_theme() {
        let b = book(ThemeStage::Baseline, vec![theme("b1", "x", &["c"])]);
        let d = ReviewDecision {
            dimension: Dimension::Challenge,
            actions: vec![ThemeAction::replace("b1", "nope")],
            analyst_note: String::new(),
            decided_by: "a".into(),
        };
        let diags = validate_decision(&d, &b, &[]);
        assert!(matches!(diagnostics_error(&diags), Some(Error::UnknownTheme(id)) if id == "nope"));
    }
}
