//! Text normalization shared by the parsers, the reducer and the tracer.

use std::collections::BTreeSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// A non-fatal finding raised while parsing or assembling an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Warning {
    pub kind: WarningKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    OverCount,
    QuoteUnverified,
    MissingField,
    TopicOutOfRange,
    ShortOfGroups,
    ExcessGroups,
    EmptyGroup,
    AmbiguousLevel,
    TruncatedResponse,
    NamesOnlyListing,
    PromptFallback,
}

impl Warning {
    pub fn new(kind: WarningKind, detail: impl Into<String>) -> Self {
        Warning {
            kind,
            detail: detail.into(),
        }
    }
}

pub const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "into",
    "is", "it", "its", "of", "on", "or", "out", "that", "the", "their", "them", "they", "this",
    "to", "with", "which", "who", "can", "also", "be", "been", "being", "was", "were", "will",
];

/// Codebook name key: lowercase, trimmed, single spaces, no trailing punctuation.
pub fn normalize_name(name: &str) -> String {
    let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c == '…')
        .trim()
        .to_lowercase()
}

/// Lowercase, punctuation folded away, whitespace collapsed. Apostrophes are
/// dropped rather than split so that "don't" and "dont" agree.
pub fn normalize_for_match(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\'' | '’' | '‘' => {}
            c if c.is_alphanumeric() => out.extend(c.to_lowercase()),
            _ => out.push(' '),
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Normalized words, in order.
pub fn match_words(text: &str) -> Vec<String> {
    normalize_for_match(text)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Crude plural folding: "barriers" -> "barrier", "allows" -> "allow".
pub fn stem(word: &str) -> &str {
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        &word[..word.len() - 1]
    } else {
        word
    }
}

/// Normalized words with stopwords removed, in order, unstemmed.
pub fn content_words(text: &str) -> Vec<String> {
    match_words(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Stemmed content words with stopwords removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    content_words(text).iter().map(|w| stem(w).to_owned()).collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    inter as f64 / union as f64
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// JSON values embedded in a model response, most likely first: fenced
/// blocks, then the outermost `{...}` span, then the outermost `[...]` span.
pub fn json_values(raw: &str) -> Vec<serde_json::Value> {
    let mut candidates: Vec<&str> = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(close) = after.find("```") else { break };
        let block = &after[..close];
        // drop a language tag on the opening fence line
        let block = match block.split_once('\n') {
            Some((first, body)) if !first.trim_start().starts_with(['{', '[']) => body,
            _ => block,
        };
        candidates.push(block);
        rest = &after[close + 3..];
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(a), Some(b)) = (raw.find(open), raw.rfind(close)) {
            if a < b {
                candidates.push(&raw[a..=b]);
            }
        }
    }
    candidates.push(raw);
    let mut out = Vec::new();
    for c in candidates {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(c.trim()) {
            if (v.is_object() || v.is_array()) && !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}
