mod common;

use std::collections::HashMap;
use std::path::Path;

use common::{rng, span_oracle};
use lexner::corpus::{Document, LabelSource, Sentence};
use lexner::lexicon::{annotate_with_lexicon, filter_for_mlm, harvest_candidates, validate_unambiguous, Lexicon, LexiconEntry, MatchOptions};
use lexner::mlm::{StubBackend, StubConfig, VocabStub};
use lexner::span_detector::SpanPattern;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn seed_lexicon() -> Lexicon {
    Lexicon::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/conll_seed.lex")).unwrap()
}

#[test]
fn seed_lexicon_is_balanced_and_unambiguous() {
    let lex = seed_lexicon();
    let sizes: Vec<(String, usize)> = lex.iter().map(|(c, e)| (c.to_string(), e.len())).collect();
    assert_eq!(sizes, [("LOC".into(), 10), ("MISC".into(), 10), ("ORG".into(), 10), ("PER".into(), 10)]);
    assert!(validate_unambiguous(&lex).is_empty());
    assert_eq!(lex.entries(&"LOC".into())[9].surface, ["NEW", "YORK"]);
    let again: Lexicon = lex.to_string().parse().unwrap();
    assert_eq!(again, lex);
}

#[test]
fn duplicated_surface_is_reported() {
    let mut lex = seed_lexicon();
    lex.insert("LOC".into(), LexiconEntry::new("Honda", 1));
    lex.insert("PER".into(), LexiconEntry::new("British", 1));
    let v = validate_unambiguous(&lex);
    let got: Vec<(String, Vec<String>)> =
        v.iter().map(|x| (x.surface.clone(), x.classes.iter().map(|c| c.to_string()).collect())).collect();
    assert_eq!(got, [("British".into(), vec!["MISC".into(), "PER".into()]), ("Honda".into(), vec!["LOC".into(), "ORG".into()])]);
    let docs = vec![Document::new("d", vec![Sentence::from_words(0, &["Honda"], &["NNP"])])];
    let err = annotate_with_lexicon(&docs, &lex, MatchOptions::default()).unwrap_err();
    assert!(err.to_string().contains("Honda"), "{err}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = "[PER]\nAnn\t12\nBob\tmany\n".parse::<Lexicon>().unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
    assert!("Ann\n".parse::<Lexicon>().is_err());
}

#[test]
fn longest_match_wins_and_gold_is_kept() {
    let lex = seed_lexicon();
    let mut s = Sentence::from_words(
        0,
        &["Ajax", "Amsterdam", "beat", "PSV", "Eindhoven", "in", "NEW", "YORK", "Clinton", "said"],
        &["NNP", "NNP", "VBD", "NNP", "NNP", "IN", "NNP", "NNP", "NNP", "VBD"],
    );
    s.set_span(8, 9, &"ORG".into(), LabelSource::Gold, None);
    let docs = vec![Document::new("d", vec![s, Sentence::from_words(1, &["new", "york"], &["JJ", "NN"])])];
    let out = annotate_with_lexicon(&docs, &lex, MatchOptions::default()).unwrap();
    let spans: Vec<(usize, usize, String)> =
        out.documents[0].sentences[0].spans().iter().map(|x| (x.start, x.end, x.class.to_string())).collect();
    assert_eq!(spans, [(0, 2, "ORG".into()), (3, 5, "ORG".into()), (6, 8, "LOC".into()), (8, 9, "ORG".into())]);
    assert_eq!((out.stats.matched_entities, out.stats.matched_tokens), (3, 6));
    assert_eq!(out.unlabeled.len(), 1);

    let folded = annotate_with_lexicon(&docs, &lex, MatchOptions { case_insensitive: true }).unwrap();
    assert_eq!(folded.stats.matched_entities, 4);
}

fn random_docs(seed: u64) -> Vec<Document> {
    let mut r = rng(seed);
    const WORDS: [(&str, &str); 8] = [
        ("Bonn", "NNP"),
        ("Kohl", "NNP"),
        ("Bank", "NNP"),
        ("of", "IN"),
        ("Americans", "NNPS"),
        ("the", "DT"),
        ("met", "VBD"),
        ("in", "IN"),
    ];
    (0..r.gen_range(1..4))
        .map(|d| {
            let sentences = (0..r.gen_range(0..6))
                .map(|i| {
                    let picks: Vec<(&str, &str)> = (0..r.gen_range(0..12)).map(|_| *WORDS.choose(&mut r).unwrap()).collect();
                    let words: Vec<&str> = picks.iter().map(|p| p.0).collect();
                    let pos: Vec<&str> = picks.iter().map(|p| p.1).collect();
                    Sentence::from_words(i, &words, &pos)
                })
                .collect();
            Document::new(format!("d{d}"), sentences)
        })
        .collect()
}

proptest! {
    #[test]
    fn harvest_matches_recount(seed in any::<u64>(), top_n in 0usize..12) {
        let docs = random_docs(seed);
        let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
        for s in docs.iter().flat_map(|d| &d.sentences) {
            let tags = s.pos_tags().unwrap();
            for (a, b) in span_oracle(&tags) {
                *counts.entry(s.words()[a..b].iter().map(|w| w.to_string()).collect()).or_default() += 1;
            }
        }
        let got = harvest_candidates(&docs, &SpanPattern::default(), top_n).unwrap();
        prop_assert_eq!(got.len(), counts.len().min(top_n));
        for c in &got {
            prop_assert_eq!(counts[&c.surface], c.frequency);
        }
        let cutoff = got.last().map_or(u64::MAX, |c| c.frequency);
        if got.len() < counts.len() {
            prop_assert!(counts.values().filter(|n| **n > cutoff).count() <= got.len());
        }
        prop_assert!(got.windows(2).all(|w| (w[0].frequency, &w[1].surface) >= (w[1].frequency, &w[0].surface)));
    }

    #[test]
    fn mlm_filter_is_idempotent(seed in any::<u64>(), top_k in 1usize..12) {
        let mut r = rng(seed);
        let lex = seed_lexicon();
        let words: Vec<String> = lex.iter().flat_map(|(_, es)| es.iter().flat_map(|e| e.surface.clone())).collect();
        let multi = words.iter().filter(|_| r.gen_bool(0.3)).cloned().collect();
        let stub = StubBackend::from_config(StubConfig::Vocab(VocabStub { multi_subword: multi, ..Default::default() }));
        let once = filter_for_mlm(&lex, &stub, top_k).unwrap();
        prop_assert_eq!(filter_for_mlm(&once, &stub, top_k).unwrap(), once.clone());
        for (_, entries) in once.iter() {
            prop_assert!(entries.len() <= top_k);
        }
    }
}

#[test]
fn harvest_needs_pos_tags() {
    let mut s = Sentence::from_words(0, &["Bonn"], &["NNP"]);
    s.tokens[0].pos = None;
    assert!(harvest_candidates(&[Document::new("d", vec![s])], &SpanPattern::default(), 5).is_err());
}
