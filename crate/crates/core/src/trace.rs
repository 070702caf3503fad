//! Tracing persona elements back to the codes and quotes of their source themes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::persona::Persona;
use crate::text::{content_tokens, match_words, stem};
use crate::theming::{CodeRow, Theme, ThemeBook};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct TraceConfig {
    /// Quote similarity below this is reported as unmatched.
    pub quote_threshold: f64,
    /// Element candidates below this are not linked.
    pub link_threshold: f64,
    pub max_candidates: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            quote_threshold: 0.6,
            link_threshold: 0.3,
            max_candidates: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct QuoteMatch {
    pub code_id: String,
    pub code_name: String,
    pub theme_id: String,
    pub theme_name: String,
    pub similarity: f64,
    /// The stretch of the code quote, in normalized words, from the first to
    /// the last word shared with the persona quote.
    pub matched_span: String,
    pub above_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Goal,
    Need,
    Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct PersonaElement {
    pub kind: ElementKind,
    /// 0-based position among elements of the same kind.
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Candidate {
    pub code_id: String,
    pub code_name: String,
    pub theme_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ElementLink {
    pub element: PersonaElement,
    /// Best first.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TraceReport {
    pub persona_name: String,
    pub scope_theme_ids: Vec<String>,
    pub quote: String,
    pub quote_match: Option<QuoteMatch>,
    pub element_links: Vec<ElementLink>,
    pub unmatched_elements: Vec<PersonaElement>,
    pub config: TraceConfig,
}

fn quote_words(text: &str) -> Vec<String> {
    match_words(text).iter().map(|w| stem(w).to_owned()).collect()
}

/// Longest common subsequence of two word sequences, with the positions in
/// `b` that take part in it.
fn lcs(a: &[String], b: &[String]) -> (usize, Vec<usize>) {
    let (n, m) = (a.len(), b.len());
    let mut table = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i][j] = if a[i] == b[j] {
                table[i + 1][j + 1] + 1
            } else {
                table[i + 1][j].max(table[i][j + 1])
            };
        }
    }
    let (mut i, mut j, mut used) = (0, 0, Vec::new());
    while i < n && j < m {
        if a[i] == b[j] {
            used.push(j);
            i += 1;
            j += 1;
        } else if table[i + 1][j] >= table[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    (table[0][0], used)
}

/// Share of the quote's normalized words found, in order, in `code_quote`.
/// A quote contained verbatim (after normalization) scores 1.0.
pub fn quote_similarity(quote: &str, code_quote: &str) -> f64 {
    let a = quote_words(quote);
    if a.is_empty() {
        return 0.0;
    }
    let (len, _) = lcs(&a, &quote_words(code_quote));
    len as f64 / a.len() as f64
}

fn scope_rows<'a>(themes: &[&'a Theme]) -> Vec<(&'a Theme, &'a CodeRow)> {
    themes.iter().flat_map(|t| t.rows.iter().map(move |r| (*t, r))).collect()
}

/// Name tokens of a code that some quote word starts like (five shared
/// leading characters, or the whole token when shorter).
fn name_affinity(code_name: &str, quote_words: &[String]) -> usize {
    content_tokens(code_name)
        .iter()
        .filter(|t| {
            let head: String = t.chars().take(5).collect();
            quote_words.iter().any(|w| w.starts_with(&head))
        })
        .count()
}

/// Best-matching code quote among the expanded `themes`. Codes with equal
/// similarity (one quote extracted under several codes) are separated by how
/// much of the code name the quote echoes; remaining ties go to the earlier
/// theme.
pub fn locate_quote(quote: &str, themes: &[&Theme], config: &TraceConfig) -> Option<QuoteMatch> {
    let words = quote_words(quote);
    if words.is_empty() {
        return None;
    }
    struct Best<'a> {
        similarity: f64,
        affinity: usize,
        theme: &'a Theme,
        row: &'a CodeRow,
        used: Vec<usize>,
        code_words: Vec<String>,
    }
    let mut best: Option<Best> = None;
    for (theme, row) in scope_rows(themes) {
        let code_words = quote_words(&row.quote);
        let (len, used) = lcs(&words, &code_words);
        let similarity = len as f64 / words.len() as f64;
        let affinity = name_affinity(&row.name, &words);
        let better = best.as_ref().is_none_or(|b| {
            similarity > b.similarity || (similarity == b.similarity && affinity > b.affinity)
        });
        if better {
            best = Some(Best { similarity, affinity, theme, row, used, code_words });
        }
    }
    best.map(|Best { similarity, theme, row, used, code_words, .. }| {
        let matched_span = match (used.first(), used.last()) {
            (Some(&s), Some(&e)) => code_words[s..=e].join(" "),
            _ => String::new(),
        };
        QuoteMatch {
            code_id: row.code_id.clone(),
            code_name: row.name.clone(),
            theme_id: theme.theme_id.clone(),
            theme_name: theme.name.clone(),
            similarity,
            matched_span,
            above_threshold: similarity >= config.quote_threshold,
        }
    })
}

/// Share of the element's content tokens present in the code's name,
/// description or quote.
pub fn element_similarity(element: &str, row: &CodeRow) -> f64 {
    let e = content_tokens(element);
    if e.is_empty() {
        return 0.0;
    }
    let code: BTreeSet<String> = content_tokens(&format!("{} {} {}", row.name, row.description, row.quote));
    e.intersection(&code).count() as f64 / e.len() as f64
}

fn rank(element: &str, themes: &[&Theme], config: &TraceConfig) -> Vec<Candidate> {
    let name_tokens = content_tokens(element);
    let mut scored: Vec<(f64, usize, Candidate)> = scope_rows(themes)
        .into_iter()
        .map(|(theme, row)| {
            let sim = element_similarity(element, row);
            // Name overlap breaks ties between codes sharing a quote.
            let name_hits = content_tokens(&row.name).intersection(&name_tokens).count();
            (
                sim,
                name_hits,
                Candidate {
                    code_id: row.code_id.clone(),
                    code_name: row.name.clone(),
                    theme_id: theme.theme_id.clone(),
                    similarity: sim,
                },
            )
        })
        .filter(|(sim, ..)| *sim >= config.link_threshold)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
    scored.into_iter().take(config.max_candidates).map(|(.., c)| c).collect()
}

/// Link the persona's goal, needs and challenges, and its quote, to codes of
/// the themes it was generated from. Nothing outside those themes is searched.
pub fn trace_persona(p: &Persona, need_book: &ThemeBook, challenge_book: &ThemeBook, config: &TraceConfig) -> Result<TraceReport> {
    let sel = &p.source_selection;
    let mut scope: Vec<&Theme> = Vec::new();
    for (book, pair) in [(need_book, &sel.need_pair), (challenge_book, &sel.challenge_pair)] {
        for id in [&pair.0, &pair.1] {
            let theme = book.require(id)?;
            if !scope.iter().any(|t| t.theme_id == theme.theme_id) {
                scope.push(theme);
            }
        }
    }

    let mut elements = vec![PersonaElement {
        kind: ElementKind::Goal,
        index: 0,
        text: p.goal.clone(),
    }];
    for (kind, items) in [(ElementKind::Need, &p.needs), (ElementKind::Challenge, &p.challenges)] {
        elements.extend(items.iter().enumerate().map(|(index, text)| PersonaElement {
            kind,
            index,
            text: text.clone(),
        }));
    }

    let mut element_links = Vec::new();
    let mut unmatched_elements = Vec::new();
    for element in elements {
        let candidates = rank(&element.text, &scope, config);
        if candidates.is_empty() {
            unmatched_elements.push(element);
        } else {
            element_links.push(ElementLink { element, candidates });
        }
    }

    Ok(TraceReport {
        persona_name: p.name.clone(),
        scope_theme_ids: scope.iter().map(|t| t.theme_id.clone()).collect(),
        quote: p.quote.clone(),
        quote_match: locate_quote(&p.quote, &scope, config),
        element_links,
        unmatched_elements,
        config: *config,
    })
}

fn kind_label(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Goal => "goal",
        ElementKind::Need => "need",
        ElementKind::Challenge => "challenge",
    }
}

/// Markdown review table: each element next to the codes that ground it.
pub fn render_trace_table(report: &TraceReport) -> String {
    let mut out = format!("## Trace: {}\n\n", report.persona_name);
    match &report.quote_match {
        Some(m) => {
            let flag = if m.above_threshold { "" } else { " (UNMATCHED)" };
            let _ = writeln!(
                out,
                "Quote -> code '{}' in theme '{}', similarity {:.2}{flag}\n",
                m.code_name, m.theme_name, m.similarity
            );
        }
        None => out.push_str("Quote -> no code quotes in scope (UNMATCHED)\n\n"),
    }
    out.push_str("| element | text | best code | theme | similarity |\n|---|---|---|---|---|\n");
    for link in &report.element_links {
        let best = &link.candidates[0];
        let _ = writeln!(
            out,
            "| {} {} | {} | {} | {} | {:.2} |",
            kind_label(link.element.kind),
            link.element.index + 1,
            link.element.text.replace('|', "/"),
            best.code_name,
            best.theme_id,
            best.similarity
        );
    }
    for e in &report.unmatched_elements {
        let _ = writeln!(
            out,
            "| {} {} | {} | UNMATCHED | | |",
            kind_label(e.kind),
            e.index + 1,
            e.text.replace('|', "/")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_owned).collect()
    }

    #[test]
    fn lcs_reports_positions() {
        let (len, used) = lcs(&w("a b c d"), &w("x a c y d"));
        assert_eq!(len, 3);
        assert_eq!(used, vec![1, 2, 4]);
    }

    #[test]
    fn contained_quote_scores_one() {
        assert_eq!(quote_similarity("the Company, works!", "so the company works better"), 1.0);
        assert_eq!(quote_similarity("", "anything"), 0.0);
        assert!(quote_similarity("red green", "blue") < 0.01);
    }
}
