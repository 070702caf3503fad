//! A deterministic synthetic interview corpus for offline runs and tests.
//!
//! Fourteen farmer interviews about digital information sources. Each
//! document is grown paragraph by paragraph until it chunks into its target
//! number of chunks under the default policy and `chars / 4` counting, which
//! gives 31 chunks in total.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{chunk_document, clean_text, ChunkPolicy, CleaningPolicy, Document, Tokenizer};
use crate::error::{Error, Result};
use crate::store::write_atomic;

pub const DOCUMENTS: usize = 14;
pub const DEFAULT_SEED: u64 = 2024;

/// Chunks per document; sums to 31.
const CHUNK_TARGETS: [usize; DOCUMENTS] = [3, 2, 2, 3, 2, 2, 2, 3, 2, 2, 2, 2, 2, 2];

const COUNTRIES: &[&str] = &["Poland", "Germany", "Italy", "Spain", "Austria", "Slovenia", "Greece"];
const CROPS: &[&str] = &["wheat", "maize", "potatoes", "grapes", "olives", "barley", "apples", "sugar beet"];
const ANIMALS: &[&str] = &["poultry", "dairy cows", "pigs", "sheep", "goats"];
const SOURCES: &[&str] = &[
    "online forums",
    "the advisory service",
    "farming magazines",
    "video platforms",
    "the cooperative newsletter",
    "manufacturer websites",
];

const QUESTIONS: &[&str] = &[
    "Interviewer: Where do you usually look for information about your farm?",
    "Interviewer: Can you describe a recent problem you tried to solve with digital tools?",
    "Interviewer: How do you decide whether a source is trustworthy?",
    "Interviewer: What would make digital information more useful for you?",
    "Interviewer: Do you talk to other farmers about what you find online?",
    "Interviewer: What stops you from using digital sources more often?",
    "Interviewer: How has your way of working changed in recent years?",
];

/// Answer sentences. `{crop}`, `{animal}`, `{source}` and `{country}` are filled per use.
const ANSWERS: &[&str] = &[
    "There is so much misleading information on the internet that filtering reliable advice takes me hours every week.",
    "Most technical documents about {crop} are only available in English, and my English is not good enough to follow them.",
    "I would like a central platform where advice about {crop} and {animal} is collected in one place.",
    "When my {animal} get sick I search {source} first, but the answers often contradict each other.",
    "Talking with neighbouring farmers gives me trust, because I know their fields and their results.",
    "The mobile network in our valley is weak, so videos about machinery rarely load in the field.",
    "Advice from {source} is usually written for large farms and does not fit small family farms in {country}.",
    "I need practical information on soil health that I can apply directly to my {crop} fields.",
    "Subsidy rules change every year and finding the current regulations online is confusing.",
    "Weather forecasts and disease warnings on my phone help me plan spraying for {crop}.",
    "My children help me with the computer, otherwise I would not manage the online forms.",
    "I want to compare prices for fertiliser and seed before ordering, but the offers are hard to compare.",
    "Young farmers in {country} share videos about new machinery, and older farmers feel left behind.",
    "Digital tools could help optimize work in the company and avoid a lot of waste.",
    "Tracking mortality rates of our {animal} in a spreadsheet helps us spot health problems early.",
    "I distrust sellers who present advertising as neutral advice on {source}.",
    "Learning new software takes time that I simply do not have during the harvest season.",
    "Personal exchange with experts at field days is still the best way to learn for me.",
    "Information about organic certification for {crop} is scattered across many websites.",
    "Local dialect terms for pests do not match the official names used on {source}.",
    "I would pay for an advisory app if it gave reliable answers tailored to my region of {country}.",
    "Data from my machinery stays in the manufacturer portal and I cannot combine it with my own records.",
    "Community groups online help me feel less alone with the problems on the farm.",
    "Veterinary advice for {animal} online is often too general to act on.",
    "Market prices for {crop} change quickly and I need timely updates to decide when to sell.",
    "Privacy worries me, because I do not know who sees the data about my farm.",
];

fn fill_slots(template: &str, rng: &mut ChaCha8Rng, country: &str) -> String {
    template
        .replace("{crop}", CROPS.choose(rng).unwrap())
        .replace("{animal}", ANIMALS.choose(rng).unwrap())
        .replace("{source}", SOURCES.choose(rng).unwrap())
        .replace("{country}", country)
}

fn paragraph(rng: &mut ChaCha8Rng, country: &str) -> String {
    let question = QUESTIONS.choose(rng).unwrap();
    let n = rng.random_range(3..=5);
    let answers: Vec<String> = ANSWERS
        .choose_multiple(rng, n)
        .map(|a| fill_slots(a, rng, country))
        .collect();
    format!("{question}\n\nFarmer: {}", answers.join(" "))
}

fn chunk_count(doc_id: &str, text: &str, policy: &ChunkPolicy) -> Result<usize> {
    let doc = Document {
        doc_id: doc_id.to_owned(),
        source_path: String::new(),
        raw_text: String::new(),
        cleaned_text: text.to_owned(),
    };
    Ok(chunk_document(&doc, policy, Tokenizer::CharsDiv4)?.len())
}

/// The synthetic corpus. Identical for identical seeds.
pub fn synthetic_corpus(seed: u64) -> Result<Vec<Document>> {
    let policy = ChunkPolicy::default();
    let cleaning = CleaningPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(DOCUMENTS);
    for (i, &target) in CHUNK_TARGETS.iter().enumerate() {
        let doc_id = format!("interview-{:02}", i + 1);
        let country = *COUNTRIES.choose(&mut rng).unwrap();
        let mut paragraphs = vec![format!(
            "Interview {} with a farmer from {country}. Recorded and transcribed for the study.",
            i + 1
        )];
        // grow until the target is reached, then fill most of the last chunk
        let fill_to = (target - 1) * policy.chunk_max + policy.chunk_min + 200;
        loop {
            let candidate = paragraph(&mut rng, country);
            let mut next = paragraphs.clone();
            next.push(candidate);
            let text = next.join("\n\n");
            let count = chunk_count(&doc_id, &text, &policy)?;
            if count > target {
                if chunk_count(&doc_id, &paragraphs.join("\n\n"), &policy)? == target {
                    break;
                }
                return Err(Error::InvalidPolicy(format!("synthetic document {doc_id} overshot {target} chunks")));
            }
            paragraphs = next;
            if count == target && Tokenizer::CharsDiv4.count(&text) >= fill_to {
                break;
            }
        }
        let raw_text = paragraphs.join("\n\n") + "\n";
        docs.push(Document {
            cleaned_text: clean_text(&raw_text, &cleaning),
            source_path: format!("{doc_id}.txt"),
            doc_id,
            raw_text,
        });
    }
    Ok(docs)
}

/// Write the corpus as `<doc_id>.txt` files.
pub fn write_synthetic_corpus(dir: &Path, seed: u64) -> Result<Vec<Document>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let docs = synthetic_corpus(seed)?;
    for d in &docs {
        write_atomic(&dir.join(format!("{}.txt", d.doc_id)), d.raw_text.as_bytes())?;
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::chunk_corpus;

    #[test]
    fn thirty_one_chunks() {
        let docs = synthetic_corpus(DEFAULT_SEED).unwrap();
        assert_eq!(docs.len(), DOCUMENTS);
        let chunks = chunk_corpus(&docs, &ChunkPolicy::default(), Tokenizer::CharsDiv4).unwrap();
        assert_eq!(chunks.len(), CHUNK_TARGETS.iter().sum::<usize>());
        assert_eq!(chunks.len(), 31);
    }

    #[test]
    fn deterministic() {
        assert_eq!(synthetic_corpus(7).unwrap(), synthetic_corpus(7).unwrap());
    }
}
