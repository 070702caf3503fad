//! Persona writing: theme tuple selection, the persona prompt, and a tolerant
//! parser for the model's free-text persona.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{Completion, PromptRequest, PurposeTag};
use crate::prompts::{fill, Budget, Templates};
use crate::text::{word_count, Warning, WarningKind};
use crate::theming::{Theme, ThemeBook, ThemeStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Every unordered pair, a theme may pair with itself: n(n+1)/2.
    #[default]
    UnorderedWithRepetition,
    /// Unordered pairs of different themes: n(n-1)/2.
    UnorderedDistinct,
    /// Shuffle, cut into disjoint pairs, pick one pair.
    DisjointPairing,
    /// Pairs named by the analyst.
    Manual,
}

impl PairMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairMode::UnorderedWithRepetition => "unordered_with_repetition",
            PairMode::UnorderedDistinct => "unordered_distinct",
            PairMode::DisjointPairing => "disjoint_pairing",
            PairMode::Manual => "manual",
        }
    }
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PairMode::UnorderedWithRepetition,
            PairMode::UnorderedDistinct,
            PairMode::DisjointPairing,
            PairMode::Manual,
        ]
        .into_iter()
        .find(|m| m.as_str() == s.replace('-', "_"))
        .ok_or_else(|| Error::Config(format!("unknown pairing mode {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TupleSelection {
    pub need_pair: (String, String),
    pub challenge_pair: (String, String),
    pub seed: u64,
    pub mode: PairMode,
}

/// Index pairs `(i, j)` over `n` items, `i <= j`, in lexicographic order.
/// Disjoint pairing and manual mode can produce any distinct pair and any
/// pair respectively, so they enumerate like the distinct and
/// with-repetition modes.
pub fn enumerate_pairs(n: usize, mode: PairMode) -> Result<Vec<(usize, usize)>> {
    let distinct = matches!(mode, PairMode::UnorderedDistinct | PairMode::DisjointPairing);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (if distinct { i + 1 } else { i }..n).map(move |j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet(mode.to_string()));
    }
    Ok(pairs)
}

fn require_final(book: &ThemeBook) -> Result<()> {
    if book.themes.is_empty() {
        return Err(Error::EmptyThemeBook);
    }
    if book.stage != ThemeStage::Final {
        return Err(Error::WrongStage {
            expected: ThemeStage::Final.to_string(),
            found: book.stage.to_string(),
        });
    }
    Ok(())
}

/// Theme-id pairs of a final book under `mode`.
pub fn enumerate_tuples(book: &ThemeBook, mode: PairMode) -> Result<Vec<(String, String)>> {
    require_final(book)?;
    Ok(enumerate_pairs(book.themes.len(), mode)?
        .into_iter()
        .map(|(i, j)| (book.themes[i].theme_id.clone(), book.themes[j].theme_id.clone()))
        .collect())
}

fn pick_pair(book: &ThemeBook, mode: PairMode, rng: &mut ChaCha8Rng) -> Result<(String, String)> {
    match mode {
        PairMode::DisjointPairing => {
            let mut ids: Vec<&str> = book.themes.iter().map(|t| t.theme_id.as_str()).collect();
            ids.shuffle(rng);
            let pairs: Vec<(&str, &str)> = ids.chunks_exact(2).map(|c| (c[0], c[1])).collect();
            if pairs.is_empty() {
                return Err(Error::EmptyPairSet(mode.to_string()));
            }
            let (a, b) = pairs[rng.random_range(0..pairs.len())];
            Ok((a.to_owned(), b.to_owned()))
        }
        PairMode::Manual => Err(Error::InvalidRequest(
            "manual mode takes explicit theme ids; use manual_selection".into(),
        )),
        _ => {
            let all = enumerate_tuples(book, mode)?;
            Ok(all[rng.random_range(0..all.len())].clone())
        }
    }
}

/// The disjoint pairs one shuffle produces, for display.
pub fn disjoint_pairs(book: &ThemeBook, seed: u64) -> Result<Vec<(String, String)>> {
    require_final(book)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = book.themes.iter().map(|t| t.theme_id.clone()).collect();
    ids.shuffle(&mut rng);
    Ok(ids.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect())
}

/// Seeded random selection of one need pair and one challenge pair.
pub fn select_tuples(need_book: &ThemeBook, challenge_book: &ThemeBook, seed: u64, mode: PairMode) -> Result<TupleSelection> {
    require_final(need_book)?;
    require_final(challenge_book)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need_pair = pick_pair(need_book, mode, &mut rng)?;
    let challenge_pair = pick_pair(challenge_book, mode, &mut rng)?;
    Ok(TupleSelection {
        need_pair,
        challenge_pair,
        seed,
        mode,
    })
}

/// An analyst's own choice of themes, checked against the books.
pub fn manual_selection(
    need_book: &ThemeBook,
    challenge_book: &ThemeBook,
    need_pair: (String, String),
    challenge_pair: (String, String),
    seed: u64,
) -> Result<TupleSelection> {
    for id in [&need_pair.0, &need_pair.1] {
        need_book.require(id)?;
    }
    for id in [&challenge_pair.0, &challenge_pair.1] {
        challenge_book.require(id)?;
    }
    Ok(TupleSelection {
        need_pair,
        challenge_pair,
        seed,
        mode: PairMode::Manual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct PersonaConfig {
    pub temperature: f64,
    pub model_name: String,
    pub max_response_tokens: usize,
    pub mode: PairMode,
    pub count: usize,
    pub strict: bool,
    /// Explicit ages below this are young.
    pub young_below: u32,
    /// Explicit ages above this are old.
    pub old_above: u32,
}

impl Default for PersonaConfig {
    fn default() -> Self {
        PersonaConfig {
            temperature: 1.0,
            model_name: String::new(),
            max_response_tokens: 900,
            mode: PairMode::UnorderedWithRepetition,
            count: 1,
            strict: false,
            young_below: 35,
            old_above: 55,
        }
    }
}

fn serialize_theme(theme: &Theme, with_code_descriptions: bool) -> String {
    let mut out = format!("{} ({})", theme.name.trim(), theme.description.trim());
    for row in &theme.rows {
        let quote = row.quote.replace('"', "'");
        if with_code_descriptions && !row.description.trim().is_empty() {
            out.push_str(&format!(
                " [code: {}; description: {}; quote: \"{quote}\"]",
                row.name.trim(),
                row.description.trim()
            ));
        } else {
            out.push_str(&format!(" [code: {}; quote: \"{quote}\"]", row.name.trim()));
        }
    }
    out
}

fn serialize_pair(book: &ThemeBook, pair: &(String, String), with_code_descriptions: bool) -> Result<String> {
    let mut ids = vec![&pair.0];
    if pair.1 != pair.0 {
        ids.push(&pair.1);
    }
    Ok(ids
        .into_iter()
        .map(|id| book.require(id).map(|t| serialize_theme(t, with_code_descriptions)))
        .collect::<Result<Vec<_>>>()?
        .join(", "))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonaPrompt {
    pub request: PromptRequest,
    pub warnings: Vec<Warning>,
}

/// Render the persona prompt over the selected themes. If the full material
/// does not fit, codes are listed without their descriptions.
pub fn render_persona_prompt(
    selection: &TupleSelection,
    need_book: &ThemeBook,
    challenge_book: &ThemeBook,
    config: &PersonaConfig,
    templates: &Templates,
    budget: &Budget,
) -> Result<PersonaPrompt> {
    let render = |full: bool| -> Result<String> {
        Ok(fill(
            &templates.write_persona,
            &[
                ("needs_list", &serialize_pair(need_book, &selection.need_pair, full)?),
                ("challenges_list", &serialize_pair(challenge_book, &selection.challenge_pair, full)?),
            ],
        ))
    };
    let mut warnings = Vec::new();
    let mut prompt = render(true)?;
    if !budget.fits(&prompt, config.max_response_tokens) {
        warnings.push(Warning::new(
            WarningKind::PromptFallback,
            "theme material too long; codes listed without descriptions",
        ));
        prompt = render(false)?;
        budget.check(&prompt, config.max_response_tokens)?;
    }
    let request = PromptRequest::new(prompt, PurposeTag::WritePersona)
        .with_temperature(config.temperature)
        .with_max_response_tokens(config.max_response_tokens)
        .with_model(config.model_name.clone())
        .with_seed(Some(selection.seed))
        .with_metadata("need_pair", format!("{},{}", selection.need_pair.0, selection.need_pair.1))
        .with_metadata(
            "challenge_pair",
            format!("{},{}", selection.challenge_pair.0, selection.challenge_pair.1),
        )
        .with_metadata("mode", selection.mode.as_str());
    Ok(PersonaPrompt { request, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AgeBracket {
    Young,
    Middle,
    Old,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Persona {
    pub name: String,
    pub age_bracket: Option<AgeBracket>,
    pub stated_age: Option<u32>,
    /// The age line as written.
    pub age_text: String,
    pub country: String,
    pub goal: String,
    pub background: String,
    pub needs: Vec<String>,
    pub challenges: Vec<String>,
    pub it_skills: Option<Level>,
    pub attitude_digital: Option<Level>,
    pub quote: String,
    pub source_selection: TupleSelection,
    pub raw_response: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
    /// Findings of [`validate_persona`], filled in by the pipeline.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation: Vec<Finding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Name,
    Age,
    Country,
    Goal,
    Background,
    Needs,
    Challenges,
    ItSkills,
    Attitude,
    Quote,
    /// A recognised heading with nothing to store ("User Persona:").
    Heading,
    /// A heading outside the persona format (e.g. "Occupation").
    Other,
}

fn label_field(label: &str) -> Option<Field> {
    let l = label
        .trim()
        .to_ascii_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let f = match l.as_str() {
        "name" | "persona name" | "full name" => Field::Name,
        "age" | "age bracket" | "age group" | "age range" => Field::Age,
        "country" | "location" | "nationality" => Field::Country,
        "goal" | "main goal" | "primary goal" | "persona main goal" | "main goal (max 1)" => Field::Goal,
        "background" | "narrative background" | "narrative" | "persona background" => Field::Background,
        "needs" | "main needs" | "key needs" => Field::Needs,
        "challenges" | "main challenges" | "key challenges" => Field::Challenges,
        "user persona" | "persona" => Field::Heading,
        "occupation" | "job" | "profession" | "gender" => Field::Other,
        _ if l.starts_with("it skill") || l.starts_with("it-skill") => Field::ItSkills,
        _ if l.starts_with("attitude") => Field::Attitude,
        _ if l.starts_with("quote") => Field::Quote,
        _ => return None,
    };
    Some(f)
}

fn strip_markup(line: &str) -> String {
    line.replace("**", "")
        .replace("__", "")
        .trim()
        .trim_start_matches('#')
        .trim()
        .to_owned()
}

fn bullet_item(line: &str) -> Option<&str> {
    for marker in ["- ", "* ", "• ", "– "] {
        if let Some(rest) = line.strip_prefix(marker) {
            return Some(rest.trim());
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = line[digits..].strip_prefix(". ").or_else(|| line[digits..].strip_prefix(") ")) {
            return Some(rest.trim());
        }
    }
    None
}

const EU_COUNTRIES: &[&str] = &[
    "Austria", "Belgium", "Bulgaria", "Croatia", "Cyprus", "Czech Republic", "Czechia", "Denmark", "Estonia",
    "Finland", "France", "Germany", "Greece", "Hungary", "Ireland", "Italy", "Latvia", "Lithuania",
    "Luxembourg", "Malta", "Netherlands", "Poland", "Portugal", "Romania", "Slovakia", "Slovenia", "Spain",
    "Sweden",
];

fn country_in(text: &str) -> Option<&'static str> {
    EU_COUNTRIES
        .iter()
        .filter_map(|c| text.find(c).map(|pos| (pos, *c)))
        .min()
        .map(|(_, c)| c)
}

fn numbers(text: &str) -> Vec<u32> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter_map(|t| t.parse().ok())
        .collect()
}

/// Bracket and explicitly stated age from an age line.
pub fn parse_age(text: &str, young_below: u32, old_above: u32) -> (Option<AgeBracket>, Option<u32>) {
    let lower = text.to_ascii_lowercase();
    let nums = numbers(&lower);
    // "(45)" or "45 years old": a single number that is not a decade
    let stated = match nums.as_slice() {
        [n] if !lower.contains(&format!("{n}s")) && (10..=110).contains(n) => Some(*n),
        _ => None,
    };
    let keyword = if lower.contains("middle") {
        Some(AgeBracket::Middle)
    } else if lower.contains("young") {
        Some(AgeBracket::Young)
    } else if lower.contains("old") && !lower.contains("years old") || lower.contains("elderly") || lower.contains("senior") {
        Some(AgeBracket::Old)
    } else {
        None
    };
    let by_number = |age: u32| {
        if age < young_below {
            AgeBracket::Young
        } else if age > old_above {
            AgeBracket::Old
        } else {
            AgeBracket::Middle
        }
    };
    let estimate = stated.or_else(|| {
        // "Late 30s" -> 37, "early 40s" -> 42, "between 40-60" -> 50
        let decade = nums.iter().find(|n| lower.contains(&format!("{n}s")) && *n % 10 == 0).copied();
        match (decade, nums.as_slice()) {
            (Some(d), _) if lower.contains("late") => Some(d + 7),
            (Some(d), _) if lower.contains("early") => Some(d + 2),
            (Some(d), _) => Some(d + 5),
            (None, [a, b]) => Some((a + b) / 2),
            _ => None,
        }
    });
    (keyword.or(estimate.map(by_number)), stated)
}

fn parse_level(text: &str) -> Option<(Level, bool)> {
    let lower = text.to_ascii_lowercase();
    let mut found: Vec<(usize, Level)> = [("low", Level::Low), ("medium", Level::Medium), ("moderate", Level::Medium), ("high", Level::High)]
        .into_iter()
        .filter_map(|(w, l)| lower.find(w).map(|p| (p, l)))
        .collect();
    found.sort_by_key(|(p, _)| *p);
    found.dedup_by_key(|(_, l)| *l);
    let first = found.first()?.1;
    Some((first, found.len() > 1))
}

fn unquote(s: &str) -> String {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '“' | '”'))
        .trim()
        .to_owned()
}

#[derive(Default)]
struct Fields {
    name: String,
    age: String,
    country: String,
    goal: String,
    background: String,
    needs: Vec<String>,
    challenges: Vec<String>,
    it_skills: String,
    attitude: String,
    quote: String,
    seen: Vec<Field>,
}

impl Fields {
    fn text_mut(&mut self, f: Field) -> Option<&mut String> {
        Some(match f {
            Field::Name => &mut self.name,
            Field::Age => &mut self.age,
            Field::Country => &mut self.country,
            Field::Goal => &mut self.goal,
            Field::Background => &mut self.background,
            Field::ItSkills => &mut self.it_skills,
            Field::Attitude => &mut self.attitude,
            Field::Quote => &mut self.quote,
            _ => return None,
        })
    }

    fn list_mut(&mut self, f: Field) -> Option<&mut Vec<String>> {
        match f {
            Field::Needs => Some(&mut self.needs),
            Field::Challenges => Some(&mut self.challenges),
            _ => None,
        }
    }

    fn append(&mut self, f: Field, value: &str) {
        if value.is_empty() {
            return;
        }
        if let Some(list) = self.list_mut(f) {
            list.push(value.to_owned());
        } else if let Some(text) = self.text_mut(f) {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(value);
        }
    }
}

/// Parse a persona written in "Label: value" form, in any order, with
/// bulleted lists for needs and challenges.
pub fn parse_persona(completion: &Completion, selection: &TupleSelection) -> Result<Persona> {
    parse_persona_with(completion, selection, &PersonaConfig::default())
}

pub fn parse_persona_with(completion: &Completion, selection: &TupleSelection, config: &PersonaConfig) -> Result<Persona> {
    let raw = &completion.response_text;
    let mut fields = Fields::default();
    let mut current: Option<Field> = None;
    for line in raw.lines() {
        let line = strip_markup(line);
        if line.is_empty() {
            continue;
        }
        if let Some(item) = bullet_item(&line) {
            match current {
                Some(f) if fields.list_mut(f).is_some() => fields.append(f, item),
                Some(f) => fields.append(f, item),
                None => {}
            }
            continue;
        }
        let labelled = line.split_once(':').and_then(|(label, value)| {
            (label.split_whitespace().count() <= 6)
                .then(|| label_field(label))
                .flatten()
                .map(|f| (f, value.trim()))
        });
        let Some((field, value)) = labelled else {
            if let Some(f) = current {
                fields.append(f, &line);
            }
            continue;
        };
        fields.seen.push(field);
        current = Some(field);
        match field {
            Field::Heading => {
                // "Persona: Anna, from Poland"
                if !value.is_empty() && fields.name.is_empty() {
                    match value.split_once(", from ") {
                        Some((name, country)) => {
                            fields.name = name.trim().to_owned();
                            fields.country = country.trim().trim_end_matches('.').to_owned();
                        }
                        None => fields.name = value.to_owned(),
                    }
                }
                current = None;
            }
            Field::Other => {}
            f => fields.append(f, value),
        }
    }

    if fields.goal.is_empty() && fields.needs.is_empty() && fields.challenges.is_empty() {
        return Err(Error::parse("response has no goal, needs or challenges", raw.clone()));
    }

    let mut warnings = Vec::new();
    if completion.truncated {
        warnings.push(Warning::new(WarningKind::TruncatedResponse, "persona response hit the token limit"));
    }
    let mut missing = |name: &str, empty: bool| {
        if empty {
            warnings.push(Warning::new(WarningKind::MissingField, format!("no {name} found")));
        }
    };
    missing("name", fields.name.is_empty());
    missing("age", fields.age.is_empty());
    missing("goal", fields.goal.is_empty());
    missing("background", fields.background.is_empty());
    missing("IT skills", fields.it_skills.is_empty());
    missing("attitude toward digital innovation", fields.attitude.is_empty());
    missing("quote", fields.quote.is_empty());

    let mut country = fields.country.trim().trim_end_matches('.').to_owned();
    if country.is_empty() {
        if let Some(c) = country_in(&fields.background).or_else(|| country_in(&fields.name)) {
            warnings.push(Warning::new(
                WarningKind::MissingField,
                format!("no country line; {c} taken from the background"),
            ));
            country = c.to_owned();
        } else {
            warnings.push(Warning::new(WarningKind::MissingField, "no country found"));
        }
    }

    let mut level = |name: &str, text: &str| -> Option<Level> {
        if text.is_empty() {
            return None;
        }
        match parse_level(text) {
            Some((l, ambiguous)) => {
                if ambiguous {
                    warnings.push(Warning::new(
                        WarningKind::AmbiguousLevel,
                        format!("{name} '{text}' names several levels; using {l:?}").to_lowercase(),
                    ));
                }
                Some(l)
            }
            None => {
                warnings.push(Warning::new(
                    WarningKind::MissingField,
                    format!("{name} '{text}' is not low, medium or high"),
                ));
                None
            }
        }
    };
    let it_skills = level("IT skills", &fields.it_skills);
    let attitude_digital = level("attitude", &fields.attitude);

    for (what, items, max) in [("need", &fields.needs, 3), ("challenge", &fields.challenges, 2)] {
        if items.len() > max {
            warnings.push(Warning::new(
                WarningKind::OverCount,
                format!("{what}_count: {} listed, at most {max} asked for", items.len()),
            ));
        }
    }

    let (age_bracket, stated_age) = parse_age(&fields.age, config.young_below, config.old_above);
    if !fields.age.is_empty() && age_bracket.is_none() {
        warnings.push(Warning::new(
            WarningKind::MissingField,
            format!("age '{}' does not map to a bracket", fields.age),
        ));
    }

    Ok(Persona {
        name: fields.name.trim().to_owned(),
        age_bracket,
        stated_age,
        age_text: fields.age.trim().to_owned(),
        country,
        goal: fields.goal.trim().to_owned(),
        background: fields.background.trim().to_owned(),
        needs: fields.needs,
        challenges: fields.challenges,
        it_skills,
        attitude_digital,
        quote: unquote(&fields.quote),
        source_selection: selection.clone(),
        raw_response: raw.clone(),
        warnings,
        validation: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Finding {
    pub severity: Severity,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub persona_name: String,
    pub strict: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn rules(&self) -> Vec<&str> {
        self.findings.iter().map(|f| f.rule.as_str()).collect()
    }
}

pub const BACKGROUND_MAX_WORDS: usize = 200;
pub const NEEDS_MAX: usize = 3;
pub const NEED_MAX_WORDS: usize = 30;
pub const CHALLENGES_MAX: usize = 2;
pub const CHALLENGE_MAX_WORDS: usize = 20;

/// Check a persona against the limits the prompt states. Violations are
/// warnings, or errors when `strict`.
pub fn validate_persona(p: &Persona, strict: bool) -> ValidationReport {
    let mut findings = Vec::new();
    let sev = if strict { Severity::Error } else { Severity::Warn };
    let mut flag = |rule: &str, detail: String| {
        findings.push(Finding {
            severity: sev,
            rule: rule.to_owned(),
            detail,
        })
    };
    let bg = word_count(&p.background);
    if bg > BACKGROUND_MAX_WORDS {
        flag("background_word_limit", format!("background has {bg} words, limit {BACKGROUND_MAX_WORDS}"));
    }
    if p.needs.len() > NEEDS_MAX {
        flag("need_count", format!("{} needs, limit {NEEDS_MAX}", p.needs.len()));
    }
    for (i, n) in p.needs.iter().enumerate() {
        let w = word_count(n);
        if w > NEED_MAX_WORDS {
            flag("need_word_limit", format!("need {} has {w} words, limit {NEED_MAX_WORDS}", i + 1));
        }
    }
    if p.challenges.len() > CHALLENGES_MAX {
        flag("challenge_count", format!("{} challenges, limit {CHALLENGES_MAX}", p.challenges.len()));
    }
    for (i, c) in p.challenges.iter().enumerate() {
        let w = word_count(c);
        if w > CHALLENGE_MAX_WORDS {
            flag("challenge_word_limit", format!("challenge {} has {w} words, limit {CHALLENGE_MAX_WORDS}", i + 1));
        }
    }
    if p.goal.trim().is_empty() {
        flag("goal_missing", "no main goal".into());
    }
    if p.it_skills.is_none() {
        flag("it_skills_level", "IT skills not one of low, medium, high".into());
    }
    if p.attitude_digital.is_none() {
        flag("attitude_level", "attitude not one of low, medium, high".into());
    }
    if p.country.trim().is_empty() {
        flag("country_missing", "no country".into());
    }
    let s = &p.source_selection;
    for (what, pair) in [("need", &s.need_pair), ("challenge", &s.challenge_pair)] {
        if pair.0 == pair.1 {
            findings.push(Finding {
                severity: Severity::Info,
                rule: "self_pair".into(),
                detail: format!("{what} pair repeats theme {}", pair.0),
            });
        }
    }
    ValidationReport {
        persona_name: p.name.clone(),
        strict,
        findings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selection() -> TupleSelection {
        TupleSelection {
            need_pair: ("n1".into(), "n2".into()),
            challenge_pair: ("c1".into(), "c2".into()),
            seed: 0,
            mode: PairMode::Manual,
        }
    }

    #[test]
    fn pair_counts_follow_closed_forms() {
        for n in 1..=12 {
            let rep = enumerate_pairs(n, PairMode::UnorderedWithRepetition).unwrap();
            assert_eq!(rep.len(), n * (n + 1) / 2);
            if n > 1 {
                assert_eq!(enumerate_pairs(n, PairMode::UnorderedDistinct).unwrap().len(), n * (n - 1) / 2);
            }
        }
        assert!(matches!(enumerate_pairs(1, PairMode::UnorderedDistinct), Err(Error::EmptyPairSet(_))));
    }

    #[test]
    fn age_lines() {
        assert_eq!(parse_age("Middle-aged (45)", 35, 55), (Some(AgeBracket::Middle), Some(45)));
        assert_eq!(parse_age("Middle-aged", 35, 55), (Some(AgeBracket::Middle), None));
        assert_eq!(parse_age("Late 30s", 35, 55), (Some(AgeBracket::Middle), None));
        assert_eq!(parse_age("Early 30s", 35, 55), (Some(AgeBracket::Young), None));
        assert_eq!(parse_age("62 years old", 35, 55), (Some(AgeBracket::Old), Some(62)));
        assert_eq!(parse_age("28", 35, 55), (Some(AgeBracket::Young), Some(28)));
        assert_eq!(
            parse_age("Middle age (between 40-60 years old)", 35, 55),
            (Some(AgeBracket::Middle), None)
        );
        assert_eq!(parse_age("Young", 35, 55), (Some(AgeBracket::Young), None));
        assert_eq!(parse_age("Old", 35, 55), (Some(AgeBracket::Old), None));
    }

    #[test]
    fn levels() {
        assert_eq!(parse_level("Medium"), Some((Level::Medium, false)));
        assert_eq!(parse_level("Low to medium"), Some((Level::Low, true)));
        assert_eq!(parse_level("none"), None);
    }

    #[test]
    fn not_a_persona() {
        let c = Completion::offline("d", "Sorry, I can't write that.");
        assert!(matches!(parse_persona(&c, &selection()), Err(Error::Parse { .. })));
    }

    #[test]
    fn persona_heading_with_country() {
        let c = Completion::offline(
            "d",
            "Persona: Anna, from Poland\n\nAge: Middle age\n\nGoal: To grow.\n\nIT Skills: Low to medium\n",
        );
        let p = parse_persona(&c, &selection()).unwrap();
        assert_eq!(p.name, "Anna");
        assert_eq!(p.country, "Poland");
        assert_eq!(p.it_skills, Some(Level::Low));
        assert!(p.warnings.iter().any(|w| w.kind == WarningKind::AmbiguousLevel));
    }
}
