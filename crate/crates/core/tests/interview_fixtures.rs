use std::path::PathBuf;

use tapersona::coding::{build_codebook, reduce_codebook, Code, Dimension, ReductionConfig};
use tapersona::llm::Completion;
use tapersona::persona::{
    parse_persona, validate_persona, AgeBracket, Level, PairMode, Persona, TupleSelection,
};
use tapersona::theming::{CodeRow, Theme, ThemeBook};
use tapersona::trace::{locate_quote, trace_persona, ElementKind, TraceConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

struct Books {
    need: ThemeBook,
    challenge: ThemeBook,
}

fn books() -> Books {
    let v: serde_json::Value = serde_json::from_str(&read("katarina_themes.json")).unwrap();
    Books {
        need: serde_json::from_value(v["need"].clone()).unwrap(),
        challenge: serde_json::from_value(v["challenge"].clone()).unwrap(),
    }
}

fn katarina_selection() -> TupleSelection {
    TupleSelection {
        need_pair: (
            "need-personalization-and-user-friendliness".into(),
            "need-animal-health-and-farming-issues".into(),
        ),
        challenge_pair: (
            "challenge-navigating-online-information".into(),
            "challenge-language-barriers".into(),
        ),
        seed: 0,
        mode: PairMode::Manual,
    }
}

fn parse_fixture(name: &str, selection: &TupleSelection) -> Persona {
    let text = read(&format!("personas/{name}.txt"));
    parse_persona(&Completion::offline("fixture", text), selection).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const PERSONAS: [&str; 6] = ["katarina", "gisela", "giuseppe", "anna", "maria_rossi", "marta"];

#[test]
fn all_six_personas_parse() {
    for name in PERSONAS {
        let p = parse_fixture(name, &katarina_selection());
        assert!(!p.name.is_empty(), "{name}: name");
        assert!(!p.goal.is_empty(), "{name}: goal");
        assert!(!p.needs.is_empty(), "{name}: needs");
        assert!(!p.challenges.is_empty(), "{name}: challenges");
        assert!(!p.quote.is_empty(), "{name}: quote");
    }
}

#[test]
fn katarina_fields_and_challenge_count() {
    let p = parse_fixture("katarina", &katarina_selection());
    assert_eq!(p.name, "Katarina");
    assert_eq!(p.it_skills, Some(Level::Medium));
    assert_eq!(p.attitude_digital, Some(Level::High));
    assert_eq!(p.country, "Poland");
    assert_eq!(p.age_bracket, Some(AgeBracket::Middle));
    assert_eq!(p.challenges.len(), 3);
    assert!(p.warnings.iter().any(|w| w.detail.starts_with("challenge_count")));
    assert!(validate_persona(&p, false).rules().contains(&"challenge_count"));
}

#[test]
fn gisela_stated_age_is_middle() {
    let p = parse_fixture("gisela", &katarina_selection());
    assert_eq!(p.name, "Gisela Schmidt");
    assert_eq!(p.stated_age, Some(45));
    assert_eq!(p.age_bracket, Some(AgeBracket::Middle));
    assert_eq!(p.country, "Germany");
}

#[test]
fn appendix_personas_details() {
    let sel = katarina_selection();
    let marta = parse_fixture("marta", &sel);
    assert_eq!(marta.age_bracket, Some(AgeBracket::Middle));
    // a decade is an estimate, not a stated age
    assert_eq!(marta.stated_age, None);
    assert_eq!(marta.it_skills, Some(Level::Low));
    let anna = parse_fixture("anna", &sel);
    assert_eq!(anna.name, "Anna");
    assert_eq!(anna.country, "Poland");
    assert_eq!(anna.age_bracket, Some(AgeBracket::Middle));
    assert_eq!(anna.it_skills, Some(Level::Low));
    let giuseppe = parse_fixture("giuseppe", &sel);
    assert_eq!(giuseppe.country, "Italy");
}

#[test]
fn katarina_quote_traces_to_optimization() {
    let b = books();
    let scope: Vec<&Theme> = b.need.themes.iter().chain(&b.challenge.themes).collect();
    let p = parse_fixture("katarina", &katarina_selection());
    let m = locate_quote(&p.quote, &scope, &TraceConfig::default()).unwrap();
    assert_eq!(m.code_name, "Optimization");
    assert_eq!(m.theme_name, "Animal Health and Farming Issues");
    assert!(m.similarity >= 0.9, "similarity {}", m.similarity);
}

#[test]
fn katarina_misleading_information_challenge_links_to_filtering_code() {
    let b = books();
    let p = parse_fixture("katarina", &katarina_selection());
    let report = trace_persona(&p, &b.need, &b.challenge, &TraceConfig::default()).unwrap();
    let link = report
        .element_links
        .iter()
        .find(|l| l.element.kind == ElementKind::Challenge && l.element.text.contains("misleading"))
        .expect("misleading-information challenge is linked");
    let top = &link.candidates[0];
    assert_eq!(top.code_name, "Filtering Information Online");
    let row = b.challenge.themes[0].rows.iter().find(|r| r.code_id == top.code_id).unwrap();
    assert!(row.quote.starts_with("Misleading information"));
    assert_eq!(
        report.element_links.len() + report.unmatched_elements.len(),
        1 + p.needs.len() + p.challenges.len()
    );
}

fn decoy(dimension: Dimension, id: &str, quote: &str) -> Theme {
    Theme {
        theme_id: id.into(),
        dimension,
        name: "Decoy".into(),
        description: "Optimization of work and filtering misleading information".into(),
        member_code_ids: vec![format!("{id}-code")],
        code_count: 1,
        weak_candidate: true,
        rows: vec![CodeRow {
            code_id: format!("{id}-code"),
            reduced_code_id: format!("{id}-code"),
            name: "Optimization".into(),
            description: "Filtering out misleading information from the internet".into(),
            quote: quote.into(),
            source_chunk_id: "decoy".into(),
        }],
    }
}

#[test]
fn decoy_themes_outside_the_selection_are_never_used() {
    let mut b = books();
    let p = parse_fixture("katarina", &katarina_selection());
    let before = trace_persona(&p, &b.need, &b.challenge, &TraceConfig::default()).unwrap();
    // Decoys echo the persona verbatim, so any leak would win.
    b.need.themes.insert(0, decoy(Dimension::Need, "need-decoy", &p.quote));
    b.challenge.themes.insert(0, decoy(Dimension::Challenge, "challenge-decoy", &p.challenges.join(" ")));
    let after = trace_persona(&p, &b.need, &b.challenge, &TraceConfig::default()).unwrap();
    assert_eq!(before, after);
    for link in &after.element_links {
        for c in &link.candidates {
            assert!(!c.theme_id.contains("decoy"));
        }
    }
}

fn names_book(file: &str, dimension: Dimension) -> tapersona::coding::Codebook {
    let codes = read(file)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, name)| Code {
            code_id: format!("{}-{i:03}", dimension.as_str()),
            dimension,
            name: name.to_owned(),
            description: String::new(),
            quote: format!("quote {i}"),
            source_chunk_id: format!("doc-{:02}-chunk-00", i % 14),
            source_doc_id: format!("doc-{:02}", i % 14),
            source_ordinal: 0,
            extraction_index: i,
            merged_from: Vec::new(),
            lineage_quotes: Vec::new(),
            quote_verified: true,
        })
        .collect();
    build_codebook(codes, dimension).unwrap()
}

#[test]
fn challenge_names_reduce_near_39() {
    let raw = names_book("challenge_code_names.txt", Dimension::Challenge);
    assert_eq!(raw.len(), 62);
    let (reduced, _) = reduce_codebook(&raw, &ReductionConfig::default()).unwrap();
    assert!((35..=45).contains(&reduced.len()), "{}", reduced.len());
    assert_eq!(reduced.quote_multiset(), raw.quote_multiset());
}

#[test]
fn need_names_reduce_near_75() {
    let raw = names_book("need_code_names.txt", Dimension::Need);
    assert_eq!(raw.len(), 93);
    let (reduced, _) = reduce_codebook(&raw, &ReductionConfig::default()).unwrap();
    assert!((70..=80).contains(&reduced.len()), "{}", reduced.len());
}
