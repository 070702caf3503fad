//! A deterministic stand-in for a chat model.
//!
//! [`ScriptedResponder`] reads the prompts this crate renders and answers them
//! in the shapes a real model tends to use: coding answers quote sentences of
//! the chunk verbatim, grouping answers partition the numbered topic list,
//! persona answers use the selected codes and echo one of their quotes. The
//! output depends only on the request (prompt, temperature, seed), so a run
//! against it is reproducible bit for bit.

use std::collections::BTreeMap;

use serde_json::json;

use super::mock::Responder;
use super::{PromptRequest, PurposeTag};
use crate::store::sha256_hex;
use crate::text::content_words;

#[derive(Debug, Clone, Default)]
pub struct ScriptedResponder {
    _private: (),
}

impl ScriptedResponder {
    pub fn new() -> Self {
        ScriptedResponder::default()
    }
}

impl Responder for ScriptedResponder {
    fn respond(&self, req: &PromptRequest) -> Option<String> {
        match req.purpose {
            PurposeTag::CodeChallenges => Some(code_response(req, "Challenges", 2)),
            PurposeTag::CodeNeeds => Some(code_response(req, "Needs", 3)),
            PurposeTag::GroupThemes | PurposeTag::VariabilityTest => group_response(req),
            PurposeTag::WritePersona => Some(persona_response(req)),
            PurposeTag::Other => None,
        }
    }
}

fn hash64(parts: &[&str]) -> u64 {
    let h = sha256_hex(parts.join("\u{1f}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

/// The variable part of a request: T=0 ignores the seed.
fn sampling_key(req: &PromptRequest) -> String {
    if req.temperature == 0.0 {
        String::new()
    } else {
        format!("{}:{}", req.temperature, req.seed.unwrap_or(0))
    }
}

fn title_case(words: &[String]) -> String {
    words
        .iter()
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn fenced_text(prompt: &str) -> &str {
    let Some(end) = prompt.rfind("```") else {
        return prompt;
    };
    match prompt[..end].rfind("```") {
        Some(start) => &prompt[start + 3..end],
        None => prompt,
    }
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in bytes.iter().enumerate() {
        let at_end = matches!(c, '.' | '!' | '?')
            && bytes.get(i + 1).is_none_or(|&(_, n)| n.is_whitespace());
        if at_end {
            let s = text[start..pos + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = pos + c.len_utf8();
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

fn code_response(req: &PromptRequest, key: &str, limit: usize) -> String {
    let text = fenced_text(&req.prompt_text);
    // Interviewer turns and very short sentences make poor quotes.
    let candidates: Vec<&str> = sentences(text)
        .into_iter()
        .filter(|s| !s.starts_with("Interviewer") && content_words(s).len() >= 4)
        .collect();
    let h = hash64(&[text, key, &sampling_key(req)]);
    let mut entries = Vec::new();
    if !candidates.is_empty() {
        let n = limit.min(candidates.len()).max(1);
        let step = candidates.len() / n;
        for i in 0..n {
            let idx = (h as usize + i * step.max(1)) % candidates.len();
            let sentence = candidates[idx];
            let quote = sentence
                .split_once(": ")
                .filter(|(speaker, _)| speaker.split_whitespace().count() <= 2)
                .map_or(sentence, |(_, q)| q);
            let words = content_words(quote);
            let name = title_case(&words[..words.len().min(3)]);
            let description = match key {
                "Challenges" => format!("The interviewee struggles with {}.", words.join(" ")),
                _ => format!("The interviewee needs support with {}.", words.join(" ")),
            };
            entries.push(json!({"name": name, "description": description, "quote": quote}));
        }
    }
    let body = serde_json::to_string_pretty(&json!({ key: entries })).expect("json");
    match h % 3 {
        0 => format!("Here is the analysis of the text:\n\n```json\n{body}\n```\n\nLet me know if you need more detail."),
        _ => body,
    }
}

/// Topic lines `"<i>. <name>: <description>"` (or `"<i>. <name>"`) from a grouping prompt.
fn numbered_topics(prompt: &str) -> Vec<(usize, String)> {
    let listing = prompt
        .split_once("List of topics:")
        .map_or(prompt, |(_, rest)| rest);
    listing
        .lines()
        .filter_map(|line| {
            let (num, rest) = line.trim().split_once(". ")?;
            let n: usize = num.parse().ok()?;
            let name = rest.split_once(": ").map_or(rest, |(name, _)| name);
            Some((n, name.trim().to_owned()))
        })
        .collect()
}

fn requested_groups(req: &PromptRequest) -> Option<usize> {
    if let Some(n) = req.metadata.get("n_groups").and_then(|v| v.parse().ok()) {
        return Some(n);
    }
    let (_, rest) = req.prompt_text.split_once("Create ")?;
    rest.split_whitespace().next()?.parse().ok()
}

fn group_response(req: &PromptRequest) -> Option<String> {
    let topics = numbered_topics(&req.prompt_text);
    let n_groups = requested_groups(req)?.max(1);
    if topics.is_empty() {
        return None;
    }
    // Order topics by their leading word so that related codes fall together.
    let mut order: Vec<(String, usize, String)> = topics
        .iter()
        .map(|(n, name)| {
            let key = content_words(name).into_iter().next().unwrap_or_default();
            (key, *n, name.clone())
        })
        .collect();
    order.sort();

    let sampling = sampling_key(req);
    if !sampling.is_empty() {
        // Sampling noise: a few neighbouring topics trade places.
        let h = hash64(&[&req.prompt_text, &sampling]);
        let swaps = (order.len() / 6).max(1);
        for i in 0..swaps {
            let a = ((h >> (i * 7)) as usize) % order.len();
            let b = (a + 1) % order.len();
            order.swap(a, b);
        }
    }

    let groups_n = n_groups.min(order.len());
    let mut groups: Vec<Vec<&(String, usize, String)>> = vec![Vec::new(); groups_n];
    for (i, t) in order.iter().enumerate() {
        groups[i * groups_n / order.len()].push(t);
    }

    let mut prose = String::from("Here are the groups:\n\n");
    let mut json_groups = Vec::new();
    for (gi, members) in groups.iter().enumerate() {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for (_, _, name) in members {
            for w in content_words(name) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(usize, String)> = freq.into_iter().map(|(w, c)| (c, w)).collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let label: Vec<String> = ranked.iter().take(2).map(|(_, w)| w.clone()).collect();
        let name = format!("{} Issues", title_case(&label));
        let mut nums: Vec<usize> = members.iter().map(|(_, n, _)| *n).collect();
        // The first topic of every other group is shared with the next group.
        if gi % 2 == 0 && gi + 1 < groups.len() {
            if let Some(first) = groups[gi + 1].first() {
                nums.push(first.1);
            }
        }
        nums.sort_unstable();
        nums.dedup();
        let description = format!(
            "Topics concerning {}.",
            members
                .iter()
                .map(|(_, _, name)| name.to_lowercase())
                .collect::<Vec<_>>()
                .join(", ")
        );
        prose.push_str(&format!(
            "{}. {name}: {description}\nTopics: {}\n\n",
            gi + 1,
            nums.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        ));
        json_groups.push(json!({"name": name, "description": description, "topics": nums}));
    }
    prose.push_str("Topics that fit in more than one group are listed under each of them.\n\n");
    let body = serde_json::to_string_pretty(&json!({ "Groups": json_groups })).expect("json");
    Some(format!("{prose}```json\n{body}\n```\n"))
}

struct PromptCode {
    name: String,
    description: Option<String>,
    quote: String,
}

/// Codes serialized as `[code: <name>; description: <text>; quote: "<text>"]`.
fn listed_codes(line: &str) -> Vec<PromptCode> {
    let mut out = Vec::new();
    let mut rest = line;
    while let Some(start) = rest.find("[code: ") {
        let body = &rest[start + 7..];
        let Some(end) = body.find("\"]") else { break };
        let inner = &body[..end];
        rest = &body[end + 2..];
        let Some((head, quote)) = inner.split_once("quote: \"") else {
            continue;
        };
        let mut parts = head.trim_end_matches([' ', ';']).splitn(2, "; description: ");
        let name = parts.next().unwrap_or_default().trim().to_owned();
        let description = parts.next().map(|d| d.trim().to_owned());
        out.push(PromptCode {
            name,
            description,
            quote: quote.to_owned(),
        });
    }
    out
}

fn list_line<'a>(prompt: &'a str, label: &str) -> &'a str {
    prompt
        .lines()
        .find(|l| l.starts_with(label))
        .unwrap_or_default()
}

fn truncate_words(text: &str, max: usize) -> String {
    text.split_whitespace().take(max).collect::<Vec<_>>().join(" ")
}

const NAMES: &[&str] = &["Anna", "Marek", "Ilse", "Tomasz", "Chiara", "Jan", "Elena", "Pieter"];
const COUNTRIES: &[&str] = &["Poland", "Germany", "Italy", "Netherlands", "Belgium", "Spain", "Austria"];
const AGES: &[&str] = &["Young (29)", "Middle-aged (45)", "Old (61)"];
const LEVELS: &[&str] = &["Low", "Medium", "High"];

fn persona_response(req: &PromptRequest) -> String {
    let needs = listed_codes(list_line(&req.prompt_text, "List of needs:"));
    let challenges = listed_codes(list_line(&req.prompt_text, "List of challenges:"));
    let h = hash64(&[&req.prompt_text, &sampling_key(req)]);
    let pick = |list: &[&'static str], shift: u32| list[((h >> shift) as usize) % list.len()];

    let describe = |c: &PromptCode, max: usize| {
        let text = c.description.clone().unwrap_or_else(|| c.name.clone());
        truncate_words(&text, max)
    };
    let goal = needs
        .first()
        .map(|c| format!("To find dependable help with {}.", c.name.to_lowercase()))
        .unwrap_or_else(|| "To keep the farm running well.".into());
    let quote = needs
        .first()
        .or(challenges.first())
        .map(|c| c.quote.clone())
        .unwrap_or_default();

    let mut out = format!(
        "Name: {}\nAge: {}\nCountry: {}\nMain Goal: {goal}\n\n",
        pick(NAMES, 0),
        pick(AGES, 8),
        pick(COUNTRIES, 16),
    );
    let topics: Vec<String> = needs
        .iter()
        .chain(challenges.iter())
        .map(|c| c.name.to_lowercase())
        .collect();
    out.push_str(&format!(
        "Background: {} runs a family farm and spends evenings reading about {}. \
         Advice from neighbours matters as much as anything found online.\n\n",
        pick(NAMES, 0),
        truncate_words(&topics.join(", "), 60)
    ));
    out.push_str("Main Needs:\n");
    for c in needs.iter().take(3) {
        out.push_str(&format!("- {}\n", describe(c, 30)));
    }
    out.push_str("\nMain Challenges:\n");
    for c in challenges.iter().take(2) {
        out.push_str(&format!("- {}\n", describe(c, 20)));
    }
    out.push_str(&format!(
        "\nIT Skills: {}\nAttitude towards digital innovation: {}\n\nQuote: \"{quote}\"\n",
        pick(LEVELS, 24),
        pick(LEVELS, 32),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coding_quotes_come_from_the_chunk() {
        let chunk = "Farmer: We check the weather forecast every morning on the phone. \
                     The cooperative sends prices by text message each week. \
                     Interviewer: Anything else? Farmer: Finding reliable machinery repair advice is hard.";
        let req = PromptRequest::new(format!("Identify...\n\n```{chunk}```\n"), PurposeTag::CodeChallenges);
        let out = ScriptedResponder::new().respond(&req).unwrap();
        let start = out.find('{').unwrap();
        let end = out.rfind('}').unwrap();
        let v: serde_json::Value = serde_json::from_str(&out[start..=end]).unwrap();
        let entries = v["Challenges"].as_array().unwrap();
        assert_eq!(entries.len(), 2);
        for e in entries {
            assert!(chunk.contains(e["quote"].as_str().unwrap()));
        }
    }

    #[test]
    fn grouping_covers_requested_count() {
        let listing: String = (1..=20)
            .map(|i| format!("{i}. Topic{} Access: something\n", i % 7))
            .collect();
        let req = PromptRequest::new(format!("Create 6 significant groups\n\nList of topics: {listing}"), PurposeTag::GroupThemes);
        let out = ScriptedResponder::new().respond(&req).unwrap();
        let json = &out[out.find("```json").unwrap() + 7..out.rfind("```").unwrap()];
        let v: serde_json::Value = serde_json::from_str(json).unwrap();
        assert_eq!(v["Groups"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn zero_temperature_ignores_seed() {
        let base = PromptRequest::new("Create 2 significant groups\nList of topics:\n1. A: x\n2. B: y\n3. C: z", PurposeTag::GroupThemes);
        let r = ScriptedResponder::new();
        assert_eq!(r.respond(&base), r.respond(&base.clone().with_seed(Some(9))));
    }

    #[test]
    fn persona_echoes_a_listed_quote() {
        let prompt = "Write...\nList of needs: Tools (Need for tools) [code: Optimization; description: Wants to optimize work.; quote: \"digital sources help optimize work\"]\n\
                      List of challenges: Language (Barriers) [code: Language Barrier; quote: \"most content is in English\"]\n";
        let req = PromptRequest::new(prompt, PurposeTag::WritePersona).with_temperature(1.0);
        let out = ScriptedResponder::new().respond(&req).unwrap();
        assert!(out.contains("Quote: \"digital sources help optimize work\""));
        assert!(out.contains("- Wants to optimize work."));
        assert!(out.contains("- Language Barrier"));
    }
}
