//! Brute-force reference implementations and random input generators shared
//! by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::collections::BTreeMap;

use lexner::corpus::{Document, EntityClass, Label, LabelSource, Sentence, Token};
use lexner::lexicon::{Lexicon, LexiconEntry};
use lexner::mlm::{ClassScore, ThresholdTable, MARGIN_EPSILON};
use lexner::tagger::{Predictor, ScoredSpan, TaggerPrediction};
use lexner::window_filter::WindowConfig;
use rand::seq::SliceRandom;
use rand::Rng;

pub use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng8;

pub fn rng(seed: u64) -> Rng8 {
    Rng8::seed_from_u64(seed)
}

pub fn class(name: &str) -> EntityClass {
    EntityClass::from(name)
}

// ---------------------------------------------------------------- spans

fn is_proper(tag: &str) -> bool {
    tag == "NNP" || tag == "NNPS"
}

/// Does the whole slice match `P+` or `P+ IN P+`?
fn whole_match(tags: &[&str]) -> bool {
    if tags.is_empty() {
        return false;
    }
    if tags.iter().all(|t| is_proper(t)) {
        return true;
    }
    (1..tags.len().saturating_sub(1)).any(|k| {
        tags[k] == "IN" && tags[..k].iter().all(|t| is_proper(t)) && tags[k + 1..].iter().all(|t| is_proper(t))
    })
}

/// Tries every `(start, end)` pair: the earliest start that has any match,
/// then the longest end for it, then continues after that end.
pub fn span_oracle(tags: &[&str]) -> Vec<(usize, usize)> {
    let n = tags.len();
    let mut out = Vec::new();
    let mut cursor = 0;
    'outer: while cursor < n {
        for start in cursor..n {
            let best = (start + 1..=n).rev().find(|&end| whole_match(&tags[start..end]));
            if let Some(end) = best {
                out.push((start, end));
                cursor = end;
                continue 'outer;
            }
        }
        break;
    }
    out
}

pub fn random_tags(rng: &mut Rng8, max_len: usize) -> Vec<&'static str> {
    const TAGS: [&str; 8] = ["NNP", "NNP", "NNPS", "IN", "IN", "DT", "VBD", "NN"];
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| *TAGS.choose(rng).unwrap()).collect()
}

// ---------------------------------------------------------------- windows

/// Marks walls, cuts the sentence at them and keeps the pieces that hold an
/// entity token (or every piece of an entity-less sentence when unlabeled
/// sentences are admitted).
pub fn window_oracle(sentence: &Sentence, cfg: &WindowConfig) -> Vec<(usize, usize)> {
    let marks: Vec<bool> = sentence
        .tokens
        .iter()
        .map(|t| {
            let pos = t.pos.as_deref().unwrap_or("");
            t.label == Label::O && (pos == "NNP" || (cfg.nnps_walls && pos == "NNPS"))
        })
        .collect();
    let any_entity = sentence.tokens.iter().any(|t| t.label != Label::O);
    let mut pieces = Vec::new();
    let mut start = None;
    for i in 0..=marks.len() {
        let wall = i == marks.len() || marks[i];
        match (wall, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                pieces.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    pieces
        .into_iter()
        .filter(|&(s, e)| {
            if any_entity {
                sentence.tokens[s..e].iter().any(|t| t.label != Label::O)
            } else {
                cfg.admit_unlabeled
            }
        })
        .collect()
}

/// A sentence with POS tags and BIO-valid labels.
pub fn random_labeled_sentence(rng: &mut Rng8, id: usize, max_len: usize) -> Sentence {
    const POS: [&str; 6] = ["NNP", "NNPS", "NN", "VBD", "IN", "DT"];
    const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];
    let n = rng.gen_range(0..=max_len);
    let mut tokens: Vec<Token> = (0..n).map(|i| Token::new(format!("w{i}"), Some(*POS.choose(rng).unwrap()))).collect();
    let mut i = 0;
    while i < n {
        if rng.gen_bool(0.25) {
            let len = rng.gen_range(1..=3).min(n - i);
            let c = class(CLASSES.choose(rng).unwrap());
            for (k, t) in tokens[i..i + len].iter_mut().enumerate() {
                t.label = if k == 0 { Label::B(c.clone()) } else { Label::I(c.clone()) };
                t.source = LabelSource::Lexicon;
            }
            i += len;
        } else {
            i += 1;
        }
    }
    Sentence::new(id, tokens)
}

// ---------------------------------------------------------------- masked LM

pub struct MlmCase {
    pub lexicon: Lexicon,
    pub tokens: Vec<String>,
    pub span: (usize, usize),
    /// Per-mask probabilities by exemplar surface; absent means ineligible.
    pub fills: BTreeMap<String, Vec<f64>>,
}

pub fn random_mlm_case(rng: &mut Rng8) -> MlmCase {
    const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];
    let mut lexicon = Lexicon::new();
    let mut fills = BTreeMap::new();
    let mut counter = 0;
    for c in CLASSES {
        if rng.gen_bool(0.2) {
            continue;
        }
        for _ in 0..rng.gen_range(1..=6) {
            let len = rng.gen_range(1..=3);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    counter += 1;
                    format!("{c}{counter}")
                })
                .collect();
            let surface = words.join(" ");
            if rng.gen_bool(0.85) {
                let probs = (0..len)
                    .map(|_| if rng.gen_bool(0.05) { 0.0 } else { rng.gen::<f64>() })
                    .collect();
                fills.insert(surface.clone(), probs);
            }
            lexicon.insert(class(c), LexiconEntry { surface: words, frequency: rng.gen_range(1..100) });
        }
    }
    let n = rng.gen_range(1..=12);
    let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let start = rng.gen_range(0..n);
    let end = rng.gen_range(start + 1..=(start + 3).min(n));
    MlmCase { lexicon, tokens, span: (start, end), fills }
}

/// Every exemplar of every class, one at a time.
pub fn mlm_scores_oracle(case: &MlmCase) -> BTreeMap<EntityClass, f64> {
    let masks = case.span.1 - case.span.0;
    let mut out: BTreeMap<EntityClass, f64> = BTreeMap::new();
    for (c, entries) in case.lexicon.iter() {
        for e in entries {
            if e.surface.len() != masks {
                continue;
            }
            let Some(p) = case.fills.get(&e.surface.join(" ")) else { continue };
            let mut total = 0.0;
            for v in p {
                total += v;
            }
            let mean = total / masks as f64;
            let slot = out.entry(c.clone()).or_insert(f64::NEG_INFINITY);
            if mean > *slot {
                *slot = mean;
            }
        }
    }
    out
}

pub fn classify_oracle(scores: &BTreeMap<EntityClass, f64>, thresholds: &ThresholdTable) -> Option<EntityClass> {
    let mut sorted: Vec<(&EntityClass, f64)> = scores.iter().map(|(c, s)| (c, *s)).collect();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let (top, best) = *sorted.first()?;
    let second = sorted.get(1).map(|x| x.1).unwrap_or(0.0);
    let margin = best - second;
    if margin > thresholds.get(top) + MARGIN_EPSILON {
        Some(top.clone())
    } else {
        None
    }
}

pub fn score_map(scores: &[ClassScore]) -> BTreeMap<EntityClass, f64> {
    scores.iter().map(|s| (s.class.clone(), s.score)).collect()
}

// ---------------------------------------------------------------- documents

const NAMES: [&str; 8] = ["Acme", "Taylor", "Paris", "Jordan", "Rabin", "Bonn", "Nike", "Euro"];
const FILLER: [&str; 6] = ["the", "said", "in", "on", "beat", ","];
const AFFIXES: [&str; 4] = ["Inc.", "Corp.", "Mr.", "Dr."];
const SCORES: [&str; 3] = ["2-1", "3", "0"];

fn random_source(rng: &mut Rng8) -> (LabelSource, Option<f64>) {
    match rng.gen_range(0..6) {
        0 => (LabelSource::Gold, None),
        1 => (LabelSource::Lexicon, None),
        2 => (LabelSource::Mlm, Some(rng.gen_range(0.5..1.0))),
        3 => (LabelSource::Rule, None),
        _ => (LabelSource::Tagger, Some(*[0.5, 0.85, 0.91, 0.95, 0.99].choose(rng).unwrap())),
    }
}

/// Documents built from a small shared vocabulary so that surfaces repeat,
/// labeled with a mix of every label source.
pub fn random_document(rng: &mut Rng8, id: usize) -> Document {
    const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];
    let sentences = (0..rng.gen_range(0..6))
        .map(|s| {
            let mut sentence = Sentence::new(s, Vec::new());
            for _ in 0..rng.gen_range(1..10) {
                let (word, pos) = match rng.gen_range(0..10) {
                    0..=3 => (*NAMES.choose(rng).unwrap(), "NNP"),
                    4 => (*AFFIXES.choose(rng).unwrap(), "NNP"),
                    5 => (*SCORES.choose(rng).unwrap(), "CD"),
                    _ => (*FILLER.choose(rng).unwrap(), "NN"),
                };
                sentence.tokens.push(Token::new(word, Some(pos)));
            }
            let n = sentence.len();
            let mut i = 0;
            while i < n {
                if sentence.tokens[i].pos.as_deref() == Some("NNP") && rng.gen_bool(0.6) {
                    let len = rng.gen_range(1..=2).min(n - i);
                    let (source, conf) = random_source(rng);
                    let c = class(CLASSES.choose(rng).unwrap());
                    sentence.set_span(i, i + len, &c, source, conf);
                    i += len;
                } else {
                    if rng.gen_bool(0.1) {
                        sentence.tokens[i] = sentence.tokens[i].clone().with_label(Label::O, LabelSource::Gold, None);
                    }
                    i += 1;
                }
            }
            sentence
        })
        .collect();
    Document::new(format!("doc{id}"), sentences)
}

/// Single-token entities over a name vocabulary disjoint from the filler
/// words, so every mention is an exact one-token surface.
pub fn random_mention_document(rng: &mut Rng8, id: usize) -> Document {
    const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];
    let sentences = (0..rng.gen_range(1..6))
        .map(|s| {
            let mut sentence = Sentence::new(s, Vec::new());
            for _ in 0..rng.gen_range(1..8) {
                if rng.gen_bool(0.5) {
                    let mut t = Token::new(*NAMES.choose(rng).unwrap(), Some("NNP"));
                    if rng.gen_bool(0.6) {
                        let (source, conf) = random_source(rng);
                        t = t.with_label(Label::B(class(CLASSES.choose(rng).unwrap())), source, conf);
                    }
                    sentence.tokens.push(t);
                } else {
                    sentence.tokens.push(Token::new(*FILLER.choose(rng).unwrap(), Some("NN")));
                }
            }
            sentence
        })
        .collect();
    Document::new(format!("doc{id}"), sentences)
}

/// Expected labels after multi-mention on a single-token-mention document.
pub fn multi_mention_oracle(doc: &Document, threshold: f64) -> Vec<Vec<Label>> {
    let mut seeds: BTreeMap<&str, Vec<(f64, &EntityClass)>> = BTreeMap::new();
    for t in doc.sentences.iter().flat_map(|s| &s.tokens) {
        if let (Label::B(c), Some(conf)) = (&t.label, t.confidence) {
            if ["PER", "ORG", "LOC"].contains(&c.as_str()) && conf > threshold {
                seeds.entry(&t.text).or_default().push((conf, c));
            }
        }
    }
    let winners: BTreeMap<&str, &EntityClass> = seeds
        .into_iter()
        .filter_map(|(w, list)| {
            let top = list.iter().map(|x| x.0).fold(f64::MIN, f64::max);
            let mut classes: Vec<&EntityClass> = list.iter().filter(|x| x.0 == top).map(|x| x.1).collect();
            classes.sort();
            classes.dedup();
            (classes.len() == 1).then(|| (w, classes[0]))
        })
        .collect();
    doc.sentences
        .iter()
        .map(|s| {
            s.tokens
                .iter()
                .map(|t| match winners.get(t.text.as_str()) {
                    Some(c) if !t.is_protected() => Label::B((*c).clone()),
                    _ => t.label.clone(),
                })
                .collect()
        })
        .collect()
}

/// Expected labels after OSPD: every mention of a surface with a unique
/// most frequent class takes that class, unless protected.
pub fn ospd_oracle(doc: &Document) -> Vec<Vec<Label>> {
    let mut counts: BTreeMap<Vec<&str>, BTreeMap<&EntityClass, usize>> = BTreeMap::new();
    let mut mentions = Vec::new();
    for (si, s) in doc.sentences.iter().enumerate() {
        let mut i = 0;
        while i < s.len() {
            let Label::B(c) = &s.tokens[i].label else {
                i += 1;
                continue;
            };
            let mut j = i + 1;
            while j < s.len() && s.tokens[j].label == Label::I(c.clone()) {
                j += 1;
            }
            let words: Vec<&str> = s.tokens[i..j].iter().map(|t| t.text.as_str()).collect();
            *counts.entry(words.clone()).or_default().entry(c).or_default() += 1;
            mentions.push((si, i, j, words));
            i = j;
        }
    }
    let mut out: Vec<Vec<Label>> = doc.sentences.iter().map(|s| s.labels()).collect();
    for (si, i, j, words) in mentions {
        let tally = &counts[&words];
        let top = tally.values().copied().max().unwrap();
        let leaders: Vec<&&EntityClass> = tally.iter().filter(|(_, n)| **n == top).map(|(c, _)| c).collect();
        if tally.len() < 2 || leaders.len() != 1 {
            continue;
        }
        let s = &doc.sentences[si];
        let blocked = s.tokens[i..j].iter().any(|t| t.is_protected())
            || (j < s.len() && s.tokens[j].is_protected() && matches!(s.tokens[j].label, Label::I(_)));
        if blocked {
            continue;
        }
        let winner = (*leaders[0]).clone();
        for k in i..j {
            out[si][k] = if k == i { Label::B(winner.clone()) } else { Label::I(winner.clone()) };
        }
    }
    out
}

// ---------------------------------------------------------------- tagger

/// Tags every NNP run as `class` with a fixed confidence.
pub struct RunPredictor {
    pub class: EntityClass,
    pub confidence: f64,
    pub classes: Vec<EntityClass>,
}

impl RunPredictor {
    pub fn new(name: &str, confidence: f64) -> Self {
        RunPredictor { class: class(name), confidence, classes: lexner::corpus::default_classes() }
    }
}

impl Predictor for RunPredictor {
    fn classes(&self) -> &[EntityClass] {
        &self.classes
    }

    fn predict_batch(&self, sentences: &[Sentence]) -> lexner::Result<Vec<TaggerPrediction>> {
        Ok(sentences
            .iter()
            .map(|s| {
                let mut labels = Vec::with_capacity(s.len());
                let mut spans = Vec::new();
                for (i, t) in s.tokens.iter().enumerate() {
                    if t.pos.as_deref() == Some("NNP") {
                        if i > 0 && labels[i - 1] != Label::O {
                            labels.push(Label::I(self.class.clone()));
                            let last: &mut ScoredSpan = spans.last_mut().unwrap();
                            last.end = i + 1;
                        } else {
                            labels.push(Label::B(self.class.clone()));
                            spans.push(ScoredSpan { start: i, end: i + 1, class: self.class.clone(), confidence: self.confidence });
                        }
                    } else {
                        labels.push(Label::O);
                    }
                }
                TaggerPrediction { labels, spans }
            })
            .collect())
    }
}

// ---------------------------------------------------------------- scorer

/// Twenty sentences as (gold, predicted) tag strings with planted boundary,
/// class, spurious and missed-entity errors.
pub const SCORER_FIXTURE: [(&str, &str); 20] = [
    ("B-PER I-PER O", "B-PER I-PER O"),
    ("B-LOC O O", "B-LOC O O"),
    ("B-ORG I-ORG O", "B-ORG O O"),
    ("O B-MISC O", "O B-MISC O"),
    ("B-PER O B-LOC", "B-ORG O B-LOC"),
    ("O O O", "B-PER O O"),
    ("B-ORG O O", "O O O"),
    ("B-LOC I-LOC I-LOC", "B-LOC I-LOC I-LOC"),
    ("B-PER B-PER O", "B-PER I-PER O"),
    ("O B-ORG O", "O B-ORG O"),
    ("B-MISC O B-MISC", "B-MISC O O"),
    ("O O O O", "O O O O"),
    ("B-LOC O", "B-LOC O"),
    ("B-PER I-PER", "B-PER I-PER"),
    ("O B-ORG I-ORG", "B-ORG I-ORG I-ORG"),
    ("B-MISC O", "B-LOC O"),
    ("O O", "O B-MISC"),
    ("B-PER O B-ORG", "B-PER O B-ORG"),
    ("B-LOC O", "B-LOC O"),
    ("O B-PER", "O B-PER"),
];

/// Counted by hand: (class, precision, recall, f1) rounded to 2 decimals.
pub const SCORER_EXPECTED: [(&str, &str, &str, &str); 5] = [
    ("LOC", "83.33", "100.00", "90.91"),
    ("MISC", "66.67", "50.00", "57.14"),
    ("ORG", "40.00", "40.00", "40.00"),
    ("PER", "66.67", "57.14", "61.54"),
    ("overall", "65.00", "61.90", "63.41"),
];

fn tagged_doc(id: &str, rows: &[&str]) -> Document {
    let sentences = rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let tokens = row
                .split(' ')
                .enumerate()
                .map(|(k, tag)| Token::new(format!("w{k}"), Some("NN")).with_label(tag.parse().unwrap(), LabelSource::Gold, None))
                .collect();
            Sentence::new(i, tokens)
        })
        .collect();
    Document::new(id, sentences)
}

/// (predicted, gold) documents of the scorer fixture.
pub fn scorer_fixture() -> (Vec<Document>, Vec<Document>) {
    let gold: Vec<&str> = SCORER_FIXTURE.iter().map(|r| r.0).collect();
    let pred: Vec<&str> = SCORER_FIXTURE.iter().map(|r| r.1).collect();
    (vec![tagged_doc("fixture", &pred)], vec![tagged_doc("fixture", &gold)])
}

/// Rows of `(class, p, r, f1)` formatted to two decimals.
pub fn report_rows(report: &lexner::eval::ScoreReport) -> Vec<(String, String, String, String)> {
    let fmt = |name: &str, m: &lexner::eval::Metrics| {
        (name.to_string(), format!("{:.2}", m.precision), format!("{:.2}", m.recall), format!("{:.2}", m.f1))
    };
    let mut rows: Vec<_> = report.per_class.iter().map(|(c, m)| fmt(c.as_str(), m)).collect();
    rows.push(fmt("overall", &report.overall));
    rows
}

/// Replaces every label with the model's prediction.
pub fn tag_docs(tagger: &dyn lexner::tagger::Tagger, model: &lexner::tagger::TaggerModel, docs: &[Document]) -> Vec<Document> {
    let p = tagger.load(model).unwrap();
    let mut out = docs.to_vec();
    for d in &mut out {
        let preds = lexner::tagger::predict(p.as_ref(), &d.sentences, &model.classes).unwrap();
        for (s, pr) in d.sentences.iter_mut().zip(preds) {
            for (t, l) in s.tokens.iter_mut().zip(pr.labels) {
                t.label = l;
            }
        }
    }
    out
}
