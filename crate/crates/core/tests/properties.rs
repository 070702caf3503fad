use proptest::prelude::*;
use tapersona::coding::{build_codebook, reduce_codebook, Code, Dimension, ReductionConfig};
use tapersona::corpus::{chunk_document, reassemble, ChunkPolicy, Document, Tokenizer};
use tapersona::persona::{enumerate_pairs, PairMode};
use tapersona::theming::{CodeRow, Theme};
use tapersona::trace::{locate_quote, quote_similarity, TraceConfig};

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,9}", 2..30).prop_map(|w| format!("{}.", w.join(" ")))
}

fn document() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(sentence(), 1..12).prop_map(|s| s.join(" ")), 1..25)
        .prop_map(|p| p.join("\n\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chunks_round_trip_and_respect_max(text in document()) {
        let doc = Document {
            doc_id: "d".into(),
            source_path: String::new(),
            raw_text: text.clone(),
            cleaned_text: text,
        };
        let policy = ChunkPolicy { chunk_min: 60, chunk_max: 150, model_context_limit: 4097 };
        let chunks = chunk_document(&doc, &policy, Tokenizer::CharsDiv4).unwrap();
        prop_assert_eq!(reassemble(&chunks), doc.cleaned_text.clone());
        prop_assert!(chunks.iter().all(|c| c.token_count <= policy.chunk_max));
        prop_assert!(chunks.iter().enumerate().all(|(i, c)| c.ordinal == i));
    }

    #[test]
    fn reduction_is_idempotent_and_keeps_quotes(
        names in prop::collection::vec(prop::sample::select(vec![
            "Language Barrier", "Language Barriers", "language barrier.", "Trust", "Trust in Sources",
            "Network Access", "Network access", "Cost", "Costs", "Training",
        ]), 1..40),
    ) {
        let codes = names.iter().enumerate().map(|(i, n)| Code {
            code_id: format!("c{i:03}"),
            dimension: Dimension::Need,
            name: (*n).into(),
            description: String::new(),
            quote: format!("q{}", i % 7),
            source_chunk_id: "x".into(),
            source_doc_id: "x".into(),
            source_ordinal: 0,
            extraction_index: i,
            merged_from: vec![],
            lineage_quotes: vec![],
            quote_verified: true,
        }).collect();
        let raw = build_codebook(codes, Dimension::Need).unwrap();
        let (once, map) = reduce_codebook(&raw, &ReductionConfig::default()).unwrap();
        let (twice, _) = reduce_codebook(&once, &ReductionConfig::default()).unwrap();
        prop_assert_eq!(&once.codes, &twice.codes);
        prop_assert_eq!(once.quote_multiset(), raw.quote_multiset());
        prop_assert_eq!(map.len(), raw.len());
    }

    #[test]
    fn pair_counts_match_brute_force(n in 1usize..40) {
        let rep = enumerate_pairs(n, PairMode::UnorderedWithRepetition).unwrap();
        let distinct = enumerate_pairs(n, PairMode::UnorderedDistinct);
        let brute: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        prop_assert_eq!(rep.len(), n * (n + 1) / 2);
        prop_assert_eq!(&rep, &brute);
        match distinct {
            Ok(d) => prop_assert_eq!(d, brute.into_iter().filter(|(i, j)| i != j).collect::<Vec<_>>()),
            Err(_) => prop_assert_eq!(n, 1),
        }
    }

    #[test]
    fn quote_similarity_is_bounded_and_exact_for_substrings(
        words in prop::collection::vec("[a-z]{3,8}", 1..30),
        start in 0usize..30,
        len in 1usize..30,
    ) {
        let full = words.join(" ");
        let s = start.min(words.len() - 1);
        let e = (s + len).min(words.len());
        let part = words[s..e].join(" ");
        prop_assert_eq!(quote_similarity(&part, &full), 1.0);
        let sim = quote_similarity(&full, &part);
        prop_assert!((0.0..=1.0).contains(&sim));
    }

    #[test]
    fn appending_unrelated_themes_keeps_exact_match(quote in prop::collection::vec("[a-z]{3,8}", 3..20)) {
        let quote = quote.join(" ");
        let theme = |id: &str, q: &str| Theme {
            theme_id: id.into(),
            dimension: Dimension::Need,
            name: id.into(),
            description: String::new(),
            member_code_ids: vec![format!("{id}-c")],
            code_count: 1,
            weak_candidate: true,
            rows: vec![CodeRow {
                code_id: format!("{id}-c"),
                reduced_code_id: format!("{id}-c"),
                name: id.into(),
                description: String::new(),
                quote: q.into(),
                source_chunk_id: "x".into(),
            }],
        };
        let home = theme("home", &quote);
        let other = theme("other", "0 1 2 3");
        let config = TraceConfig::default();
        let alone = locate_quote(&quote, &[&home], &config).unwrap();
        let with = locate_quote(&quote, &[&home, &other], &config).unwrap();
        prop_assert_eq!(alone.similarity, 1.0);
        prop_assert_eq!(alone, with);
    }
}
