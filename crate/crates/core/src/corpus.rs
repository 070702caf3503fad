//! Transcript ingestion: loading, cleaning and token-budgeted chunking.
//!
//! Chunks are contiguous slices of a document's cleaned text. Each chunk
//! records the whitespace that separated it from its successor, so the
//! document can always be reassembled exactly with [`reassemble`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Document {
    pub doc_id: String,
    pub source_path: String,
    pub raw_text: String,
    pub cleaned_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct InterviewChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub token_count: usize,
    /// Whitespace between this chunk and the next one; empty for the last chunk.
    pub separator: String,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}#{ordinal:02}")
}

/// Token counting backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    /// Exact byte-pair encoding used by the gpt-3.5/gpt-4 model family (cl100k_base).
    Cl100k,
    /// `ceil(chars / 4)`.
    #[default]
    CharsDiv4,
    /// One token per whitespace-delimited word.
    Words,
}

impl Tokenizer {
    pub fn count(self, text: &str) -> usize {
        match self {
            Tokenizer::Cl100k => tiktoken_rs::cl100k_base_singleton()
                .encode_ordinary(text)
                .len(),
            Tokenizer::CharsDiv4 => text.chars().count().div_ceil(4),
            Tokenizer::Words => text.split_whitespace().count(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tokenizer::Cl100k => "cl100k_base",
            Tokenizer::CharsDiv4 => "chars_div_4",
            Tokenizer::Words => "words",
        }
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Tokenizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl100k" | "cl100k_base" | "bpe" => Ok(Tokenizer::Cl100k),
            "chars_div_4" | "approx" => Ok(Tokenizer::CharsDiv4),
            "words" => Ok(Tokenizer::Words),
            other => Err(Error::Config(format!("unknown tokenizer {other}"))),
        }
    }
}

pub fn count_tokens(text: &str, tokenizer: Tokenizer) -> usize {
    tokenizer.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct ChunkPolicy {
    pub chunk_min: usize,
    pub chunk_max: usize,
    pub model_context_limit: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        ChunkPolicy {
            chunk_min: 700,
            chunk_max: 1600,
            model_context_limit: 4097,
        }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_min < self.chunk_max && self.chunk_max < self.model_context_limit {
            Ok(())
        } else {
            Err(Error::InvalidPolicy(format!(
                "need chunk_min < chunk_max < model_context_limit, got {} / {} / {}",
                self.chunk_min, self.chunk_max, self.model_context_limit
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct CleaningPolicy {
    /// Characters allowed in addition to printable ASCII.
    pub extra_allowed: String,
    /// Drop whole words written in a non-Latin script (and punctuation
    /// attached to them) instead of stripping them character by character.
    pub drop_foreign_passages: bool,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            extra_allowed: "‘’“”–—…".to_owned(),
            drop_foreign_passages: true,
        }
    }
}

impl CleaningPolicy {
    fn allows(&self, c: char) -> bool {
        (' '..='~').contains(&c) || self.extra_allowed.contains(c)
    }
}

fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || ('\u{00C0}'..='\u{024F}').contains(&c)
}

/// Clean one transcript.
///
/// Line endings become `\n`, whitespace inside a line collapses to single
/// spaces, blank-line runs collapse to one blank line (a paragraph break) and
/// every character outside the allowed set is removed. Words in a foreign
/// script are removed whole; a line that consisted only of such words is
/// dropped rather than left blank, so it cannot open a spurious paragraph.
pub fn clean_text(raw: &str, policy: &CleaningPolicy) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<String> = Vec::new();
    for line in unified.split('\n') {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            lines.push(String::new());
            continue;
        }
        let foreign: Vec<bool> = tokens
            .iter()
            .map(|t| {
                policy.drop_foreign_passages
                    && t.chars()
                        .any(|c| c.is_alphabetic() && !is_latin_letter(c) && !policy.allows(c))
            })
            .collect();
        // a latin word inside a foreign passage (a brand name, say) goes with it
        let foreign: Vec<bool> = (0..tokens.len())
            .map(|i| {
                foreign[i]
                    || (i > 0 && foreign[i - 1] && foreign.get(i + 1).copied().unwrap_or(false))
            })
            .collect();
        let mut kept = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if foreign[i] {
                continue;
            }
            let near_foreign = (i > 0 && foreign[i - 1]) || foreign.get(i + 1).copied().unwrap_or(false);
            if near_foreign && !tok.chars().any(char::is_alphanumeric) {
                continue;
            }
            let filtered: String = tok.chars().filter(|c| policy.allows(*c)).collect();
            let filtered = filtered.trim().to_owned();
            if !filtered.is_empty() {
                kept.push(filtered);
            }
        }
        if kept.is_empty() {
            // the line had content and all of it was removed
            continue;
        }
        lines.push(kept.join(" "));
    }

    let mut out: Vec<&str> = Vec::with_capacity(lines.len());
    for line in &lines {
        if line.is_empty() && out.last().is_none_or(|l| l.is_empty()) {
            continue;
        }
        out.push(line);
    }
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    out.join("\n")
}

/// Derive a document id from a file name: lowercase stem, runs of anything
/// other than ASCII alphanumerics replaced by `-`.
pub fn doc_id_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut id = String::new();
    for c in stem.chars() {
        if c.is_ascii_alphanumeric() {
            id.push(c.to_ascii_lowercase());
        } else if !id.ends_with('-') {
            id.push('-');
        }
    }
    id.trim_matches('-').to_owned()
}

/// Load every `.txt` file in `dir` as a document, sorted by id.
pub fn load_corpus(dir: &Path, cleaning: &CleaningPolicy) -> Result<Vec<Document>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let hidden = path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().starts_with('.'));
        let is_txt = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"));
        if path.is_file() && is_txt && !hidden {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::CorpusEmpty(dir.to_path_buf()));
    }

    let mut by_id: BTreeMap<String, Document> = BTreeMap::new();
    for path in paths {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let raw_text = String::from_utf8(bytes).map_err(|e| {
            Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, e.utf8_error()),
            )
        })?;
        let doc_id = doc_id_from_path(&path);
        let doc = Document {
            cleaned_text: clean_text(&raw_text, cleaning),
            doc_id: doc_id.clone(),
            source_path: path.to_string_lossy().into_owned(),
            raw_text,
        };
        if let Some(prev) = by_id.get(&doc_id) {
            return Err(Error::DuplicateDocId {
                doc_id,
                first: PathBuf::from(&prev.source_path),
                second: path,
            });
        }
        by_id.insert(doc_id, doc);
    }
    Ok(by_id.into_values().collect())
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
}

/// Paragraphs as lists of sentence spans, all as byte ranges into `text`.
fn segment(text: &str) -> Vec<Vec<Span>> {
    let bytes = text.as_bytes();
    let mut paragraphs = Vec::new();
    let mut sentences: Vec<Span> = Vec::new();
    let mut i = 0;
    let mut sent_start: Option<usize> = None;
    while i < bytes.len() {
        if bytes[i].is_ascii_whitespace() {
            let ws_start = i;
            let mut newlines = 0;
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                if bytes[i] == b'\n' {
                    newlines += 1;
                }
                i += 1;
            }
            let Some(start) = sent_start else { continue };
            if newlines >= 2 || i == bytes.len() {
                sentences.push(Span { start, end: ws_start });
                sent_start = None;
                paragraphs.push(std::mem::take(&mut sentences));
            } else if ends_sentence(&text[start..ws_start]) {
                sentences.push(Span { start, end: ws_start });
                sent_start = None;
            }
        } else {
            if sent_start.is_none() {
                sent_start = Some(i);
            }
            i += 1;
        }
    }
    if let Some(start) = sent_start {
        sentences.push(Span {
            start,
            end: bytes.len(),
        });
    }
    if !sentences.is_empty() {
        paragraphs.push(sentences);
    }
    paragraphs
}

fn ends_sentence(s: &str) -> bool {
    let trimmed = s.trim_end_matches(['"', '\'', ')', ']', '”', '’']);
    trimmed.ends_with(['.', '!', '?', '…'])
}

/// Split a document into chunks of at most `policy.chunk_max` tokens.
///
/// Paragraphs are accumulated greedily. A paragraph that does not fit is
/// broken at sentence boundaries when it is larger than `chunk_max` on its
/// own, or when the chunk being built is still below `chunk_min`. A trailing
/// chunk below `chunk_min` takes sentences back from its predecessor while
/// both stay within bounds.
pub fn chunk_document(
    doc: &Document,
    policy: &ChunkPolicy,
    tokenizer: Tokenizer,
) -> Result<Vec<InterviewChunk>> {
    policy.validate()?;
    let text = doc.cleaned_text.as_str();
    if text.trim().is_empty() {
        return Err(Error::EmptyDocument(doc.doc_id.clone()));
    }
    let paragraphs = segment(text);
    let tokens = |a: usize, b: usize| tokenizer.count(&text[a..b]);
    let max = policy.chunk_max;
    let min = policy.chunk_min;

    // chunk ranges as (start, end) byte offsets, plus all sentence starts for rebalancing
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;

    let overflow = |span: Span| Error::ChunkOverflow {
        doc_id: doc.doc_id.clone(),
        offset: span.start,
        tokens: tokens(span.start, span.end),
        limit: max,
    };

    for para in &paragraphs {
        let p_start = para[0].start;
        let p_end = para[para.len() - 1].end;
        let start = current.map_or(p_start, |c| c.0);
        if tokens(start, p_end) <= max {
            current = Some((start, p_end));
            continue;
        }
        if let Some(c) = current {
            if tokens(c.0, c.1) >= min {
                ranges.push(c);
                current = None;
                if tokens(p_start, p_end) <= max {
                    current = Some((p_start, p_end));
                    continue;
                }
            }
        }
        for &sent in para {
            let start = current.map_or(sent.start, |c| c.0);
            if tokens(start, sent.end) <= max {
                current = Some((start, sent.end));
                continue;
            }
            if let Some(c) = current.take() {
                ranges.push(c);
            }
            if tokens(sent.start, sent.end) > max {
                return Err(overflow(sent));
            }
            current = Some((sent.start, sent.end));
        }
    }
    if let Some(c) = current {
        ranges.push(c);
    }

    rebalance_tail(&mut ranges, &paragraphs, &tokens, min, max);

    // the first chunk owns leading text, the last chunk owns trailing text
    if let Some(first) = ranges.first_mut() {
        first.0 = 0;
    }
    if let Some(last) = ranges.last_mut() {
        last.1 = text.len();
    }

    let chunks = ranges
        .iter()
        .enumerate()
        .map(|(ordinal, &(a, b))| {
            let separator = ranges
                .get(ordinal + 1)
                .map(|next| text[b..next.0].to_owned())
                .unwrap_or_default();
            InterviewChunk {
                chunk_id: chunk_id(&doc.doc_id, ordinal),
                doc_id: doc.doc_id.clone(),
                ordinal,
                text: text[a..b].to_owned(),
                token_count: tokenizer.count(&text[a..b]),
                separator,
            }
        })
        .collect();
    Ok(chunks)
}

fn rebalance_tail(
    ranges: &mut [(usize, usize)],
    paragraphs: &[Vec<Span>],
    tokens: &dyn Fn(usize, usize) -> usize,
    min: usize,
    max: usize,
) {
    let n = ranges.len();
    if n < 2 {
        return;
    }
    let sentence_starts: Vec<usize> = paragraphs.iter().flatten().map(|s| s.start).collect();
    let sentence_ends: Vec<usize> = paragraphs.iter().flatten().map(|s| s.end).collect();
    loop {
        let (prev, last) = (ranges[n - 2], ranges[n - 1]);
        if tokens(last.0, last.1) >= min {
            return;
        }
        // move the last sentence of `prev` into `last`
        let Some(idx) = sentence_starts
            .iter()
            .rposition(|&s| s > prev.0 && s < prev.1)
        else {
            return;
        };
        let new_start = sentence_starts[idx];
        let new_prev_end = sentence_ends[idx - 1];
        if tokens(prev.0, new_prev_end) < min || tokens(new_start, last.1) > max {
            return;
        }
        ranges[n - 2].1 = new_prev_end;
        ranges[n - 1].0 = new_start;
    }
}

/// Rejoin a document's chunks with their recorded separators.
pub fn reassemble(chunks: &[InterviewChunk]) -> String {
    let mut out = String::new();
    for c in chunks {
        out.push_str(&c.text);
        out.push_str(&c.separator);
    }
    out
}

/// Chunk every document of a corpus, in document order.
pub fn chunk_corpus(
    docs: &[Document],
    policy: &ChunkPolicy,
    tokenizer: Tokenizer,
) -> Result<Vec<InterviewChunk>> {
    let mut all = Vec::new();
    for doc in docs {
        all.extend(chunk_document(doc, policy, tokenizer)?);
    }
    Ok(all)
}

/// The persisted output of ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub chunks: Vec<InterviewChunk>,
    pub policy: ChunkPolicy,
    pub tokenizer: Tokenizer,
}

impl Corpus {
    pub fn build(
        documents: Vec<Document>,
        policy: ChunkPolicy,
        tokenizer: Tokenizer,
    ) -> Result<Corpus> {
        let chunks = chunk_corpus(&documents, &policy, tokenizer)?;
        Ok(Corpus {
            documents,
            chunks,
            policy,
            tokenizer,
        })
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&InterviewChunk> {
        self.chunks.iter().find(|c| c.chunk_id == chunk_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            doc_id: "d".into(),
            source_path: "d.txt".into(),
            raw_text: text.into(),
            cleaned_text: text.into(),
        }
    }

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ") + "."
    }

    #[test]
    fn clean_identity_on_clean_input() {
        assert_eq!(clean_text("abc", &CleaningPolicy::default()), "abc");
    }

    #[test]
    fn clean_normalizes_paragraph_breaks() {
        assert_eq!(clean_text("a\n\n\nb", &CleaningPolicy::default()), "a\n\nb");
        assert_eq!(clean_text("a  \t b\r\nc", &CleaningPolicy::default()), "a b\nc");
    }

    #[test]
    fn clean_drops_cyrillic_passage_keeps_translation() {
        let raw = "We mostly use Viber. Мы в основном используем Viber, да. (We mostly use Viber, yes.)\nNext line.";
        let cleaned = clean_text(raw, &CleaningPolicy::default());
        assert_eq!(
            cleaned,
            "We mostly use Viber. (We mostly use Viber, yes.)\nNext line."
        );
        let whole_line = "A: hello\nДа, конечно.\nYes, of course.";
        assert_eq!(
            clean_text(whole_line, &CleaningPolicy::default()),
            "A: hello\nYes, of course."
        );
    }

    #[test]
    fn clean_keeps_paragraph_structure_when_foreign_line_removed() {
        let raw = "first para\n\nДа\n\nsecond para";
        assert_eq!(
            clean_text(raw, &CleaningPolicy::default()),
            "first para\n\nsecond para"
        );
    }

    #[test]
    fn count_tokens_backends() {
        assert_eq!(count_tokens("", Tokenizer::CharsDiv4), 0);
        assert_eq!(count_tokens("aaaa", Tokenizer::CharsDiv4), 1);
        assert_eq!(count_tokens("aaaaa", Tokenizer::CharsDiv4), 2);
        assert_eq!(count_tokens("two words", Tokenizer::Words), 2);
        assert_eq!(count_tokens("", Tokenizer::Cl100k), 0);
        assert_eq!(count_tokens("hello world", Tokenizer::Cl100k), 2);
    }

    #[test]
    fn doc_ids_are_slugs() {
        assert_eq!(doc_id_from_path(Path::new("/x/Farmer 03 (PL).txt")), "farmer-03-pl");
    }

    #[test]
    fn short_document_is_one_chunk() {
        let text = words(400, "w");
        let chunks = chunk_document(&doc(&text), &ChunkPolicy::default(), Tokenizer::Words).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 400);
    }

    #[test]
    fn exactly_chunk_max_is_one_chunk() {
        let text = words(1600, "w");
        let chunks = chunk_document(&doc(&text), &ChunkPolicy::default(), Tokenizer::Words).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].token_count, 1600);
    }

    #[test]
    fn greedy_paragraph_accumulation() {
        let text = (0..10)
            .map(|p| words(300, &format!("p{p}w")))
            .collect::<Vec<_>>()
            .join("\n\n");
        let chunks = chunk_document(&doc(&text), &ChunkPolicy::default(), Tokenizer::Words).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].token_count, 1500);
        assert_eq!(chunks[1].token_count, 1500);
        assert_eq!(chunks[0].separator, "\n\n");
        assert_eq!(reassemble(&chunks), text);
    }

    #[test]
    fn oversized_paragraph_splits_at_sentences() {
        let para = (0..8).map(|s| words(299, &format!("s{s}w"))).collect::<Vec<_>>().join(" ");
        let chunks = chunk_document(&doc(&para), &ChunkPolicy::default(), Tokenizer::Words).unwrap();
        assert!(chunks.iter().all(|c| c.token_count <= 1600));
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].separator, " ");
        assert_eq!(reassemble(&chunks), para);
    }

    #[test]
    fn single_sentence_over_limit_is_an_error() {
        let text = format!("intro.\n\n{}", words(1700, "x"));
        let err = chunk_document(&doc(&text), &ChunkPolicy::default(), Tokenizer::Words).unwrap_err();
        match err {
            Error::ChunkOverflow { offset, tokens, .. } => {
                assert_eq!(offset, 8);
                assert_eq!(tokens, 1700);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undersized_tail_borrows_from_predecessor() {
        // 1500 tokens of sentences followed by a 200-token paragraph
        let body = (0..15).map(|s| words(99, &format!("s{s}w"))).collect::<Vec<_>>().join(" ");
        let text = format!("{body}\n\n{}", words(199, "t"));
        let policy = ChunkPolicy::default();
        let chunks = chunk_document(&doc(&text), &policy, Tokenizer::Words).unwrap();
        assert_eq!(chunks.len(), 2);
        assert!(chunks[0].token_count >= policy.chunk_min);
        assert!(chunks[1].token_count >= policy.chunk_min);
        assert_eq!(reassemble(&chunks), text);
    }

    #[test]
    fn invalid_policy_rejected() {
        let policy = ChunkPolicy {
            chunk_min: 10,
            chunk_max: 5,
            model_context_limit: 100,
        };
        assert!(matches!(
            chunk_document(&doc("a."), &policy, Tokenizer::Words),
            Err(Error::InvalidPolicy(_))
        ));
    }

    #[test]
    fn empty_document_rejected() {
        assert!(matches!(
            chunk_document(&doc("  "), &ChunkPolicy::default(), Tokenizer::Words),
            Err(Error::EmptyDocument(_))
        ));
    }
}
