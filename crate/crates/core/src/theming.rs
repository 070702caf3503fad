//! Grouping reduced codes into themes.

use std::collections::BTreeSet;
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coding::{Code, Codebook, CodebookStage, Dimension, MergeMap};
use crate::error::{Error, Result};
use crate::llm::{Completion, Gateway, PromptRequest, PurposeTag};
use crate::prompts::{fill, Budget, Templates};
use crate::text::{json_values, normalize_name, Warning, WarningKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ThemeStage {
    Baseline,
    Variant,
    Final,
}

impl fmt::Display for ThemeStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThemeStage::Baseline => "baseline",
            ThemeStage::Variant => "variant",
            ThemeStage::Final => "final",
        })
    }
}

impl std::str::FromStr for ThemeStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ThemeStage::Baseline),
            "variant" => Ok(ThemeStage::Variant),
            "final" => Ok(ThemeStage::Final),
            other => Err(Error::Config(format!("unknown theme stage {other}"))),
        }
    }
}

/// One raw code under a theme, as shown in an expanded theme table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CodeRow {
    pub code_id: String,
    /// The reduced code this raw code was merged into.
    pub reduced_code_id: String,
    pub name: String,
    pub description: String,
    pub quote: String,
    pub source_chunk_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Theme {
    pub theme_id: String,
    pub dimension: Dimension,
    pub name: String,
    pub description: String,
    /// Reduced code ids.
    pub member_code_ids: Vec<String>,
    pub code_count: usize,
    /// A theme resting on a single code may be weak.
    pub weak_candidate: bool,
    /// Raw codes behind the members; filled by [`expand_theme`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<CodeRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TopicListing {
    /// Names with descriptions if the prompt fits, names only otherwise.
    #[default]
    Auto,
    Descriptions,
    NamesOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ThemeBook {
    pub dimension: Dimension,
    pub stage: ThemeStage,
    pub temperature_used: f64,
    /// Digest of the reduced codebook artifact the themes were built from.
    #[serde(default)]
    pub source_codebook: String,
    /// 1-based index among the variability runs; absent for other stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_index: Option<usize>,
    pub themes: Vec<Theme>,
    /// Codes of the source codebook no theme includes.
    pub uncovered_code_ids: Vec<String>,
    /// Code ids in topic-number order, exactly as rendered in the prompt.
    pub numbering: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl ThemeBook {
    pub fn get(&self, theme_id: &str) -> Option<&Theme> {
        self.themes.iter().find(|t| t.theme_id == theme_id)
    }

    pub fn require(&self, theme_id: &str) -> Result<&Theme> {
        self.get(theme_id)
            .ok_or_else(|| Error::UnknownTheme(theme_id.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct GroupingConfig {
    pub n_groups: usize,
    pub listing: TopicListing,
    pub model_name: String,
    pub max_response_tokens: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        GroupingConfig {
            n_groups: 12,
            listing: TopicListing::Auto,
            model_name: String::new(),
            max_response_tokens: 1500,
        }
    }
}

/// A rendered grouping request together with the numbering it used.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingPrompt {
    pub request: PromptRequest,
    pub dimension: Dimension,
    pub n_groups: usize,
    pub numbering: Vec<String>,
    pub listing: TopicListing,
    pub variant_index: Option<usize>,
    pub warnings: Vec<Warning>,
}

impl GroupingPrompt {
    /// Turn this into variability run `index` (1-based) with its own seed.
    pub fn for_variant(mut self, index: usize, seed: u64) -> Self {
        self.request.purpose = PurposeTag::VariabilityTest;
        self.request.seed = Some(seed);
        self.request
            .metadata
            .insert("variant_index".into(), index.to_string());
        self.variant_index = Some(index);
        self
    }

    fn stage(&self) -> ThemeStage {
        if self.variant_index.is_some() {
            ThemeStage::Variant
        } else {
            ThemeStage::Baseline
        }
    }
}

fn topic_list(codes: &[Code], with_descriptions: bool) -> String {
    codes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let desc = c.description.trim();
            if with_descriptions && !desc.is_empty() {
                format!("{}. {}: {}", i + 1, c.name, desc)
            } else {
                format!("{}. {}", i + 1, c.name)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_grouping_prompt(
    cb: &Codebook,
    temperature: f64,
    config: &GroupingConfig,
    templates: &Templates,
    budget: &Budget,
) -> Result<GroupingPrompt> {
    if cb.stage != CodebookStage::Reduced {
        return Err(Error::WrongStage {
            expected: CodebookStage::Reduced.to_string(),
            found: cb.stage.to_string(),
        });
    }
    if cb.codes.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    if config.n_groups == 0 {
        return Err(Error::InvalidRequest("n_groups must be positive".into()));
    }
    let render = |with_descriptions: bool| {
        fill(
            &templates.group_themes,
            &[
                ("n_groups", &config.n_groups.to_string()),
                ("topic_list", &topic_list(&cb.codes, with_descriptions)),
            ],
        )
    };
    let mut warnings = Vec::new();
    let (prompt, listing) = match config.listing {
        TopicListing::Descriptions => (render(true), TopicListing::Descriptions),
        TopicListing::NamesOnly => (render(false), TopicListing::NamesOnly),
        TopicListing::Auto => {
            let full = render(true);
            if budget.fits(&full, config.max_response_tokens) {
                (full, TopicListing::Descriptions)
            } else {
                warnings.push(Warning::new(
                    WarningKind::NamesOnlyListing,
                    format!("{} topic list with descriptions exceeds the budget; listing names only", cb.dimension),
                ));
                (render(false), TopicListing::NamesOnly)
            }
        }
    };
    budget.check(&prompt, config.max_response_tokens)?;
    let numbering: Vec<String> = cb.codes.iter().map(|c| c.code_id.clone()).collect();
    let request = PromptRequest::new(prompt, PurposeTag::GroupThemes)
        .with_temperature(temperature)
        .with_max_response_tokens(config.max_response_tokens)
        .with_model(config.model_name.clone())
        .with_metadata("dimension", cb.dimension.as_str())
        .with_metadata("n_groups", config.n_groups.to_string())
        .with_metadata(
            "topic_numbering",
            serde_json::to_string(&numbering).expect("strings serialize"),
        );
    Ok(GroupingPrompt {
        request,
        dimension: cb.dimension,
        n_groups: config.n_groups,
        numbering,
        listing,
        variant_index: None,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct RawGroup {
    name: String,
    description: String,
    topics: Vec<TopicRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum TopicRef {
    Number(usize),
    Name(String),
}

fn topic_ref(v: &Value) -> Option<TopicRef> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| TopicRef::Number(n as usize)),
        Value::String(s) => {
            let digits: String = s
                .trim()
                .trim_start_matches(|c: char| c.is_alphabetic() || c.is_whitespace())
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            match digits.parse() {
                Ok(n) => Some(TopicRef::Number(n)),
                Err(_) if !s.trim().is_empty() => Some(TopicRef::Name(s.trim().to_owned())),
                Err(_) => None,
            }
        }
        _ => None,
    }
}

const TOPIC_KEYS: &[&str] = &["topics", "topic numbers", "topic_numbers", "numbers", "codes", "members", "items"];

fn group_from_object(name_hint: Option<&str>, obj: &serde_json::Map<String, Value>) -> RawGroup {
    let get = |keys: &[&str]| {
        obj.iter()
            .find(|(k, _)| keys.contains(&k.trim().to_ascii_lowercase().as_str()))
            .map(|(_, v)| v)
    };
    let name = get(&["name", "group name", "theme", "title"])
        .and_then(Value::as_str)
        .map(str::to_owned)
        .or_else(|| name_hint.map(str::to_owned))
        .unwrap_or_default();
    let description = get(&["description", "summary"])
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    let topics = match get(TOPIC_KEYS) {
        Some(Value::Array(items)) => items.iter().filter_map(topic_ref).collect(),
        Some(Value::String(s)) => numbers_in(s).into_iter().map(TopicRef::Number).collect(),
        _ => Vec::new(),
    };
    RawGroup {
        name: name.trim().to_owned(),
        description: description.trim().to_owned(),
        topics,
    }
}

fn groups_from_json(v: &Value) -> Option<Vec<RawGroup>> {
    let Value::Object(obj) = v else {
        return None;
    };
    let (_, inner) = obj
        .iter()
        .find(|(k, _)| matches!(k.trim().to_ascii_lowercase().as_str(), "groups" | "group" | "themes"))?;
    match inner {
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(|g| g.as_object().map(|o| group_from_object(None, o)))
                .collect(),
        ),
        Value::Object(map) => Some(
            map.iter()
                .map(|(name, body)| match body {
                    Value::Object(o) => group_from_object(Some(name), o),
                    Value::Array(items) => RawGroup {
                        name: name.clone(),
                        description: String::new(),
                        topics: items.iter().filter_map(topic_ref).collect(),
                    },
                    _ => RawGroup {
                        name: name.clone(),
                        description: String::new(),
                        topics: Vec::new(),
                    },
                })
                .collect(),
        ),
        _ => None,
    }
}

fn numbers_in(s: &str) -> Vec<usize> {
    s.split(|c: char| !c.is_ascii_digit())
        .filter_map(|t| t.parse().ok())
        .collect()
}

/// Prose answers: "1. Name: description" headings, each followed by a
/// "Topics: 1, 4, 7" line (or with the numbers in parentheses on the heading).
fn groups_from_prose(raw: &str) -> Vec<RawGroup> {
    let mut groups: Vec<RawGroup> = Vec::new();
    for line in raw.lines() {
        let line = line.trim().trim_start_matches(['#', '-', '*', ' ']).replace("**", "");
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("topic") || lower.starts_with("codes") {
            if let Some(g) = groups.last_mut() {
                let rest = line.split_once(':').map_or(line, |(_, r)| r);
                g.topics.extend(numbers_in(rest).into_iter().map(TopicRef::Number));
            }
            continue;
        }
        if lower.starts_with("description") {
            if let Some(g) = groups.last_mut() {
                g.description = line.split_once(':').map_or("", |(_, r)| r).trim().to_owned();
            }
            continue;
        }
        let heading = lower
            .strip_prefix("group")
            .map_or(line, |_| line[5..].trim_start());
        let digits: String = heading.chars().take_while(char::is_ascii_digit).collect();
        if digits.is_empty() {
            continue;
        }
        let rest = heading[digits.len()..].trim_start_matches(['.', ')', ':', ' ']);
        if rest.is_empty() {
            continue;
        }
        let (head, tail) = match rest.split_once(": ").or_else(|| rest.split_once(" - ")) {
            Some((h, t)) => (h, t),
            None => (rest, ""),
        };
        let mut topics = Vec::new();
        let mut name = head.trim().to_owned();
        if let (Some(open), Some(close)) = (head.find('('), head.rfind(')')) {
            if open < close {
                topics = numbers_in(&head[open + 1..close]).into_iter().map(TopicRef::Number).collect();
                name = head[..open].trim().to_owned();
            }
        }
        groups.push(RawGroup {
            name,
            description: tail.trim().to_owned(),
            topics,
        });
    }
    groups.retain(|g| !g.topics.is_empty());
    groups
}

/// Map a grouping answer back to code ids through the numbering it was
/// rendered with.
pub fn parse_theme_groups(completion: &Completion, cb: &Codebook, prompt: &GroupingPrompt) -> Result<ThemeBook> {
    let raw = &completion.response_text;
    let mut groups = json_values(raw)
        .iter()
        .find_map(groups_from_json)
        .filter(|g| !g.is_empty())
        .unwrap_or_else(|| groups_from_prose(raw));
    if groups.is_empty() {
        return Err(Error::parse("no groups found in response", raw.clone()));
    }

    let mut warnings = prompt.warnings.clone();
    if completion.truncated {
        warnings.push(Warning::new(WarningKind::TruncatedResponse, "grouping response hit the token limit"));
    }
    if groups.len() > prompt.n_groups {
        warnings.push(Warning::new(
            WarningKind::ExcessGroups,
            format!("{} groups returned, {} requested; extra groups dropped", groups.len(), prompt.n_groups),
        ));
        groups.truncate(prompt.n_groups);
    }

    let n = prompt.numbering.len();
    let stage = prompt.stage();
    let label = match prompt.variant_index {
        Some(i) => format!("variant{i}"),
        None => stage.to_string(),
    };
    let mut themes = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let mut members: Vec<String> = Vec::new();
        for t in &g.topics {
            let id = match t {
                TopicRef::Number(k) if (1..=n).contains(k) => Some(prompt.numbering[k - 1].clone()),
                TopicRef::Number(k) => {
                    warnings.push(Warning::new(
                        WarningKind::TopicOutOfRange,
                        format!("group '{}' references topic {k} of {n}; dropped", g.name),
                    ));
                    None
                }
                TopicRef::Name(name) => {
                    let key = normalize_name(name);
                    let found = cb.codes.iter().find(|c| normalize_name(&c.name) == key).map(|c| c.code_id.clone());
                    if found.is_none() {
                        warnings.push(Warning::new(
                            WarningKind::TopicOutOfRange,
                            format!("group '{}' references unknown topic '{name}'; dropped", g.name),
                        ));
                    }
                    found
                }
            };
            if let Some(id) = id {
                if !members.contains(&id) {
                    members.push(id);
                }
            }
        }
        if members.is_empty() {
            warnings.push(Warning::new(
                WarningKind::EmptyGroup,
                format!("group '{}' has no valid topics; dropped", g.name),
            ));
            continue;
        }
        let name = if g.name.is_empty() { format!("Group {}", gi + 1) } else { g.name.clone() };
        themes.push(Theme {
            theme_id: format!("{}-{label}-{:02}", prompt.dimension, themes.len() + 1),
            dimension: prompt.dimension,
            name,
            description: g.description.clone(),
            code_count: members.len(),
            weak_candidate: members.len() == 1,
            member_code_ids: members,
            rows: Vec::new(),
        });
    }
    if themes.is_empty() {
        return Err(Error::parse("no group references a valid topic", raw.clone()));
    }
    if themes.len() < prompt.n_groups {
        warnings.push(Warning::new(
            WarningKind::ShortOfGroups,
            format!("{} groups usable, {} requested", themes.len(), prompt.n_groups),
        ));
    }
    let covered: BTreeSet<&String> = themes.iter().flat_map(|t| &t.member_code_ids).collect();
    let uncovered_code_ids = prompt
        .numbering
        .iter()
        .filter(|id| !covered.contains(id))
        .cloned()
        .collect();
    Ok(ThemeBook {
        dimension: prompt.dimension,
        stage,
        temperature_used: prompt.request.temperature,
        source_codebook: String::new(),
        variant_index: prompt.variant_index,
        themes,
        uncovered_code_ids,
        numbering: prompt.numbering.clone(),
        warnings,
    })
}

/// Render, send and parse one grouping run.
pub fn group_codebook(gateway: &Gateway, cb: &Codebook, prompt: &GroupingPrompt) -> Result<ThemeBook> {
    let completion = gateway.complete(&prompt.request)?;
    parse_theme_groups(&completion, cb, prompt)
}

/// Rows for every raw code behind the theme's reduced members, in raw
/// codebook order.
pub fn expand_theme(theme: &Theme, raw_cb: &Codebook, merge_map: &MergeMap) -> Result<Vec<CodeRow>> {
    let mut rows = Vec::new();
    for member in &theme.member_code_ids {
        let before = rows.len();
        for raw in &raw_cb.codes {
            if merge_map.get(&raw.code_id) == Some(member) {
                rows.push(CodeRow {
                    code_id: raw.code_id.clone(),
                    reduced_code_id: member.clone(),
                    name: raw.name.clone(),
                    description: raw.description.clone(),
                    quote: raw.quote.clone(),
                    source_chunk_id: raw.source_chunk_id.clone(),
                });
            }
        }
        if rows.len() == before {
            return Err(Error::LineageGap(member.clone()));
        }
    }
    Ok(rows)
}

/// A copy of `theme` with its rows filled in.
pub fn expanded(theme: &Theme, raw_cb: &Codebook, merge_map: &MergeMap) -> Result<Theme> {
    let mut t = theme.clone();
    t.rows = expand_theme(theme, raw_cb, merge_map)?;
    Ok(t)
}
