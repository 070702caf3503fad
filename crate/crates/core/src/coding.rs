//! Initial coding: one prompt per chunk and dimension, parsing of the coded
//! answers, and reduction of the resulting codebooks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, InterviewChunk};
use crate::error::{Error, Result};
use crate::llm::{Completion, Gateway, PromptRequest, PurposeTag};
use crate::prompts::{fill, Budget, Templates};
use crate::store::sha256_hex;
use crate::text::{json_values, normalize_for_match, normalize_name, Warning, WarningKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Challenge,
    Need,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Challenge, Dimension::Need];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Challenge => "challenge",
            Dimension::Need => "need",
        }
    }

    /// Top-level key the coding prompt asks the model to use.
    pub fn response_key(self) -> &'static str {
        match self {
            Dimension::Challenge => "Challenges",
            Dimension::Need => "Needs",
        }
    }

    /// Codes per chunk the prompt asks for.
    pub fn max_codes(self) -> usize {
        match self {
            Dimension::Challenge => 2,
            Dimension::Need => 3,
        }
    }

    pub fn coding_purpose(self) -> PurposeTag {
        match self {
            Dimension::Challenge => PurposeTag::CodeChallenges,
            Dimension::Need => PurposeTag::CodeNeeds,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "challenge" | "challenges" => Ok(Dimension::Challenge),
            "need" | "needs" => Ok(Dimension::Need),
            other => Err(Error::Config(format!("unknown dimension {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CodebookStage {
    Raw,
    Reduced,
}

impl fmt::Display for CodebookStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodebookStage::Raw => "raw",
            CodebookStage::Reduced => "reduced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Code {
    pub code_id: String,
    pub dimension: Dimension,
    pub name: String,
    pub description: String,
    /// For a merged code, the quote of its first ancestor.
    pub quote: String,
    pub source_chunk_id: String,
    pub source_doc_id: String,
    pub source_ordinal: usize,
    /// Position of the code within its chunk's response.
    pub extraction_index: usize,
    /// Raw code ids this code was merged from; empty for raw codes.
    #[serde(default)]
    pub merged_from: Vec<String>,
    /// Quotes of every ancestor in `merged_from` order; empty for raw codes.
    #[serde(default)]
    pub lineage_quotes: Vec<String>,
    pub quote_verified: bool,
}

impl Code {
    pub fn is_merged(&self) -> bool {
        !self.merged_from.is_empty()
    }

    /// Every quote this code stands for.
    pub fn quotes(&self) -> Vec<&str> {
        if self.is_merged() {
            self.lineage_quotes.iter().map(String::as_str).collect()
        } else {
            vec![self.quote.as_str()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Codebook {
    pub dimension: Dimension,
    pub stage: CodebookStage,
    pub codes: Vec<Code>,
}

impl Codebook {
    pub fn get(&self, code_id: &str) -> Option<&Code> {
        self.codes.iter().find(|c| c.code_id == code_id)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// All quotes across the book, sorted; equal for a raw book and its reduction.
    pub fn quote_multiset(&self) -> Vec<String> {
        let mut q: Vec<String> = self
            .codes
            .iter()
            .flat_map(|c| c.quotes().into_iter().map(str::to_owned))
            .collect();
        q.sort();
        q
    }
}

/// Raw code id to the id of the reduced code that absorbed it. Codes that
/// were not merged map to themselves.
pub type MergeMap = BTreeMap<String, String>;

/// The stored form of a codebook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CodebookArtifact {
    pub codebook: Codebook,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_map: Option<MergeMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct CodingConfig {
    pub model_name: String,
    pub max_response_tokens: usize,
}

impl Default for CodingConfig {
    fn default() -> Self {
        CodingConfig {
            model_name: String::new(),
            max_response_tokens: 600,
        }
    }
}

pub fn render_code_prompt(
    chunk: &InterviewChunk,
    dimension: Dimension,
    templates: &Templates,
    config: &CodingConfig,
    budget: &Budget,
) -> Result<PromptRequest> {
    let template = match dimension {
        Dimension::Challenge => &templates.code_challenges,
        Dimension::Need => &templates.code_needs,
    };
    let prompt = fill(template, &[("text", &chunk.text)]);
    budget.check(&prompt, config.max_response_tokens)?;
    Ok(PromptRequest::new(prompt, dimension.coding_purpose())
        .with_temperature(0.0)
        .with_max_response_tokens(config.max_response_tokens)
        .with_model(config.model_name.clone())
        .with_metadata("chunk_id", chunk.chunk_id.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub codes: Vec<Code>,
    pub warnings: Vec<Warning>,
}

const NAME_KEYS: &[&str] = &["name", "title", "code", "challenge", "need", "label"];
const DESCRIPTION_KEYS: &[&str] = &["description", "summary", "summary description", "desc", "explanation"];
const QUOTE_KEYS: &[&str] = &["quote", "quotes", "citation", "respondent quote", "quotation"];

fn field<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| {
            let k = k.trim().to_ascii_lowercase().replace(['_', '-'], " ");
            keys.contains(&k.as_str())
        })
        .map(|(_, v)| v)
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_owned()),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().filter_map(text_of).filter(|s| !s.is_empty()).collect();
            (!parts.is_empty()).then(|| parts.join(" "))
        }
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

fn key_matches(key: &str, dimension: Dimension) -> bool {
    let k = key.trim().to_ascii_lowercase();
    let singular = dimension.as_str();
    k == singular || k == format!("{singular}s")
}

/// Locate the list of entries for `dimension` in a parsed response.
fn entries_for(v: &Value, dimension: Dimension) -> Option<Vec<Value>> {
    match v {
        Value::Array(items) => Some(items.clone()),
        Value::Object(obj) => {
            if let Some((_, inner)) = obj.iter().find(|(k, _)| key_matches(k, dimension)) {
                return match inner {
                    Value::Array(items) => Some(items.clone()),
                    // {"Challenges": {"Name": {...}}} or {"Challenges": {"name": .., "quote": ..}}
                    Value::Object(map) if field(map, NAME_KEYS).is_some() => Some(vec![inner.clone()]),
                    Value::Object(map) => Some(
                        map.iter()
                            .map(|(name, body)| match body {
                                Value::Object(b) => {
                                    let mut b = b.clone();
                                    b.entry("name").or_insert_with(|| Value::String(name.clone()));
                                    Value::Object(b)
                                }
                                other => serde_json::json!({"name": name, "description": other}),
                            })
                            .collect(),
                    ),
                    _ => None,
                };
            }
            // one level of wrapping, e.g. {"response": {"Challenges": [...]}}
            obj.values().find_map(|inner| match inner {
                Value::Object(_) => entries_for(inner, dimension),
                _ => None,
            })
        }
        _ => None,
    }
}

/// Strip quotation marks and a trailing ellipsis a model may add around a quote.
fn bare_quote(q: &str) -> &str {
    q.trim()
        .trim_matches(|c| matches!(c, '"' | '“' | '”' | '\'' | '‘' | '’'))
        .trim_end_matches("...")
        .trim_end_matches('…')
        .trim()
}

pub fn quote_in_chunk(quote: &str, chunk_text: &str) -> bool {
    let q = normalize_for_match(bare_quote(quote));
    !q.is_empty() && normalize_for_match(chunk_text).contains(&q)
}

/// Parse a coding response into codes for `chunk`.
pub fn extract_codes(completion: &Completion, dimension: Dimension, chunk: &InterviewChunk) -> Result<Extraction> {
    let raw = &completion.response_text;
    let entries = json_values(raw)
        .iter()
        .find_map(|v| entries_for(v, dimension))
        .ok_or_else(|| {
            let reason = if completion.truncated {
                format!("response was cut at the token limit before a complete '{}' list", dimension.response_key())
            } else {
                format!("no '{}' list found in response", dimension.response_key())
            };
            Error::parse(reason, raw.clone())
        })?;

    let mut warnings = Vec::new();
    if completion.truncated {
        warnings.push(Warning::new(
            WarningKind::TruncatedResponse,
            format!("{}: response hit the token limit", chunk.chunk_id),
        ));
    }
    let mut codes = Vec::new();
    for entry in &entries {
        let (name, description, quote) = match entry {
            Value::Object(obj) => (
                field(obj, NAME_KEYS).and_then(text_of),
                field(obj, DESCRIPTION_KEYS).and_then(text_of),
                field(obj, QUOTE_KEYS).and_then(text_of),
            ),
            Value::String(s) => (Some(s.trim().to_owned()), None, None),
            _ => (None, None, None),
        };
        let Some(name) = name.filter(|n| !n.is_empty()) else {
            warnings.push(Warning::new(
                WarningKind::MissingField,
                format!("{}: entry without a name skipped: {entry}", chunk.chunk_id),
            ));
            continue;
        };
        let quote = quote.unwrap_or_default();
        if quote.is_empty() {
            warnings.push(Warning::new(
                WarningKind::MissingField,
                format!("{}: code '{name}' has no quote", chunk.chunk_id),
            ));
        }
        let verified = quote_in_chunk(&quote, &chunk.text);
        if !verified && !quote.is_empty() {
            warnings.push(Warning::new(
                WarningKind::QuoteUnverified,
                format!("{}: quote for '{name}' not found in the chunk", chunk.chunk_id),
            ));
        }
        let index = codes.len();
        codes.push(Code {
            code_id: format!("{}/{}-{}", chunk.chunk_id, dimension.as_str(), index + 1),
            dimension,
            name,
            description: description.unwrap_or_default(),
            quote,
            source_chunk_id: chunk.chunk_id.clone(),
            source_doc_id: chunk.doc_id.clone(),
            source_ordinal: chunk.ordinal,
            extraction_index: index,
            merged_from: Vec::new(),
            lineage_quotes: Vec::new(),
            quote_verified: verified,
        });
    }
    if codes.len() > dimension.max_codes() {
        warnings.push(Warning::new(
            WarningKind::OverCount,
            format!(
                "{}: {} {} codes returned, prompt asked for up to {}",
                chunk.chunk_id,
                codes.len(),
                dimension,
                dimension.max_codes()
            ),
        ));
    }
    Ok(Extraction { codes, warnings })
}

/// Assemble a raw codebook ordered by document, chunk ordinal and extraction order.
pub fn build_codebook(mut codes: Vec<Code>, dimension: Dimension) -> Result<Codebook> {
    if let Some(c) = codes.iter().find(|c| c.dimension != dimension) {
        return Err(Error::DimensionMismatch {
            expected: dimension.to_string(),
            found: format!("{} (code {})", c.dimension, c.code_id),
        });
    }
    codes.sort_by(|a, b| {
        (&a.source_doc_id, a.source_ordinal, a.extraction_index).cmp(&(&b.source_doc_id, b.source_ordinal, b.extraction_index))
    });
    Ok(Codebook {
        dimension,
        stage: CodebookStage::Raw,
        codes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ReductionConfig {
    /// Normalized edit similarity at or above which two names merge.
    pub threshold: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { threshold: 0.85 }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // keep the earliest index as root so cluster order is stable
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

pub fn names_similar(a: &str, b: &str, threshold: f64) -> bool {
    let (a, b) = (normalize_name(a), normalize_name(b));
    a == b || strsim::normalized_levenshtein(&a, &b) >= threshold
}

/// Merge codes whose names are identical after normalization or whose edit
/// similarity reaches the threshold. Clusters are connected components, so
/// reducing a reduced book changes nothing.
pub fn reduce_codebook(cb: &Codebook, config: &ReductionConfig) -> Result<(Codebook, MergeMap)> {
    let n = cb.codes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if names_similar(&cb.codes[i].name, &cb.codes[j].name, config.threshold) {
                union(&mut parent, i, j);
            }
        }
    }
    let clusters = clusters_from(&mut parent);
    merge_clusters(cb, &clusters)
}

fn clusters_from(parent: &mut [usize]) -> Vec<Vec<usize>> {
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..parent.len() {
        let r = find(parent, i);
        by_root.entry(r).or_default().push(i);
    }
    by_root.into_values().collect()
}

fn merge_clusters(cb: &Codebook, clusters: &[Vec<usize>]) -> Result<(Codebook, MergeMap)> {
    if cb.codes.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let mut codes = Vec::new();
    let mut merge_map = MergeMap::new();
    for members in clusters {
        let group: Vec<&Code> = members.iter().map(|&i| &cb.codes[i]).collect();
        if let [only] = group.as_slice() {
            codes.push((*only).clone());
            for raw in lineage_ids(only) {
                merge_map.insert(raw, only.code_id.clone());
            }
            continue;
        }
        let raw_ids: Vec<String> = group.iter().flat_map(|c| lineage_ids(c)).collect();
        let quotes: Vec<String> = group.iter().flat_map(|c| c.quotes().into_iter().map(str::to_owned)).collect();
        let name = group
            .iter()
            .map(|c| c.name.trim())
            .min()
            .expect("cluster is nonempty")
            .to_owned();
        let mut seen = BTreeSet::new();
        let description = group
            .iter()
            .map(|c| c.description.trim())
            .filter(|d| !d.is_empty() && seen.insert(d.to_owned()))
            .collect::<Vec<_>>()
            .join("; ");
        let first = group[0];
        let code_id = format!(
            "{}-merged-{}",
            cb.dimension.as_str(),
            &sha256_hex(raw_ids.join("\n").as_bytes())[..12]
        );
        for raw in &raw_ids {
            merge_map.insert(raw.clone(), code_id.clone());
        }
        codes.push(Code {
            code_id,
            dimension: cb.dimension,
            name,
            description,
            quote: first.quote.clone(),
            source_chunk_id: first.source_chunk_id.clone(),
            source_doc_id: first.source_doc_id.clone(),
            source_ordinal: first.source_ordinal,
            extraction_index: first.extraction_index,
            merged_from: raw_ids,
            lineage_quotes: quotes,
            quote_verified: group.iter().all(|c| c.quote_verified),
        });
    }
    Ok((
        Codebook {
            dimension: cb.dimension,
            stage: CodebookStage::Reduced,
            codes,
        },
        merge_map,
    ))
}

fn lineage_ids(c: &Code) -> Vec<String> {
    if c.is_merged() {
        c.merged_from.clone()
    } else {
        vec![c.code_id.clone()]
    }
}

/// Model-assisted reduction: the model is shown the numbered code names and
/// asked which ones say the same thing. Exact normalized-name duplicates are
/// always merged as well.
pub fn reduce_with_model(gateway: &Gateway, cb: &Codebook, budget: &Budget) -> Result<(Codebook, MergeMap, Vec<Warning>)> {
    if cb.codes.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let listing: String = cb
        .codes
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}\n", i + 1, c.name))
        .collect();
    let prompt = format!(
        "The following numbered list contains names of {}s identified in interviews. \
         Some entries may describe the same {} in slightly different words.\n\n{listing}\n\
         Return a json object keyed 'Merges' holding a list of lists of numbers, one list per set of entries \
         that should be merged. Leave out entries that are unique.\n",
        cb.dimension, cb.dimension
    );
    let max_response = 800;
    budget.check(&prompt, max_response)?;
    let req = PromptRequest::new(prompt, PurposeTag::Other)
        .with_max_response_tokens(max_response)
        .with_metadata("step", format!("reduce_{}", cb.dimension));
    let completion = gateway.complete(&req)?;

    let n = cb.codes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if normalize_name(&cb.codes[i].name) == normalize_name(&cb.codes[j].name) {
                union(&mut parent, i, j);
            }
        }
    }
    let mut warnings = Vec::new();
    let sets = json_values(&completion.response_text)
        .into_iter()
        .find_map(|v| match v {
            Value::Object(obj) => obj
                .into_iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("merges"))
                .and_then(|(_, v)| v.as_array().cloned()),
            Value::Array(a) => Some(a),
            _ => None,
        })
        .ok_or_else(|| Error::parse("no 'Merges' list in response", completion.response_text.clone()))?;
    for set in sets {
        let nums: Vec<usize> = set
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_u64).map(|x| x as usize).collect())
            .unwrap_or_default();
        let valid: Vec<usize> = nums
            .iter()
            .copied()
            .filter(|&k| {
                let ok = (1..=n).contains(&k);
                if !ok {
                    warnings.push(Warning::new(WarningKind::TopicOutOfRange, format!("merge entry {k} out of range 1..={n}")));
                }
                ok
            })
            .collect();
        for w in valid.windows(2) {
            union(&mut parent, w[0] - 1, w[1] - 1);
        }
    }
    let clusters = clusters_from(&mut parent);
    let (book, map) = merge_clusters(cb, &clusters)?;
    Ok((book, map, warnings))
}

/// Result of coding a whole corpus for one dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusCoding {
    pub codebook: Codebook,
    pub warnings: Vec<Warning>,
}

/// Code every chunk of `corpus`. A chunk whose answer cannot be parsed
/// contributes no codes and a warning; its raw answer stays in the manifest.
/// Provider failures abort.
pub fn code_corpus(
    gateway: &Gateway,
    corpus: &Corpus,
    dimension: Dimension,
    templates: &Templates,
    config: &CodingConfig,
    budget: &Budget,
) -> Result<CorpusCoding> {
    let requests = corpus
        .chunks
        .iter()
        .map(|c| render_code_prompt(c, dimension, templates, config, budget))
        .collect::<Result<Vec<_>>>()?;
    let completions = gateway.complete_batch(&requests);
    let mut codes = Vec::new();
    let mut warnings = Vec::new();
    for (chunk, completion) in corpus.chunks.iter().zip(completions) {
        let completion = completion?;
        match extract_codes(&completion, dimension, chunk) {
            Ok(ex) => {
                codes.extend(ex.codes);
                warnings.extend(ex.warnings);
            }
            Err(e @ Error::Parse { .. }) => warnings.push(Warning::new(
                WarningKind::MissingField,
                format!("{}: {e}", chunk.chunk_id),
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(CorpusCoding {
        codebook: build_codebook(codes, dimension)?,
        warnings,
    })
}
