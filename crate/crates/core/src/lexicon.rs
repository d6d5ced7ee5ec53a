//! Seed lexicon: per-class exemplar lists, harvesting of candidates for the
//! expert, unambiguity checking and exact-match annotation.
//!
//! File format, UTF-8:
//!
//! ```text
//! [ORG]
//! Reuters	523
//! PSV Eindhoven
//! [LOC]
//! Germany
//! ```
//!
//! A `[CLASS]` header opens a section; each following line is one surface
//! form (words separated by spaces) with an optional tab and frequency.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityClass, LabelSource, Sentence, SentenceKey};
use crate::error::{Error, Result};
use crate::mlm::SubwordCounter;
use crate::span_detector::{detect_spans, SpanPattern};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: Vec<String>,
    pub frequency: u64,
}

impl LexiconEntry {
    pub fn new(surface: &str, frequency: u64) -> Self {
        LexiconEntry {
            surface: surface.split_whitespace().map(str::to_string).collect(),
            frequency,
        }
    }

    pub fn text(&self) -> String {
        self.surface.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    entries: BTreeMap<EntityClass, Vec<LexiconEntry>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn insert(&mut self, class: EntityClass, entry: LexiconEntry) {
        self.entries.entry(class).or_default().push(entry);
    }

    pub fn classes(&self) -> impl Iterator<Item = &EntityClass> {
        self.entries.keys()
    }

    pub fn entries(&self, class: &EntityClass) -> &[LexiconEntry] {
        self.entries.get(class).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityClass, &Vec<LexiconEntry>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    /// Fails when a class that supervision relies on has no entry.
    pub fn require_classes(&self, classes: &[EntityClass]) -> Result<()> {
        match classes.iter().find(|c| self.entries(c).is_empty()) {
            Some(c) => Err(Error::Config(format!("lexicon has no entries for class {c}"))),
            None => Ok(()),
        }
    }
}

impl FromStr for Lexicon {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut lexicon = Lexicon::new();
        let mut class: Option<EntityClass> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() {
                    return Err(Error::Parse { line: lineno, msg: "empty class header".into() });
                }
                class = Some(EntityClass::from(name));
                lexicon.entries.entry(EntityClass::from(name)).or_default();
                continue;
            }
            let Some(current) = &class else {
                return Err(Error::Parse { line: lineno, msg: "entry before any [CLASS] header".into() });
            };
            let (surface, frequency) = match raw.trim_end().rsplit_once('\t') {
                Some((s, f)) => (
                    s,
                    f.trim().parse().map_err(|e| Error::Parse {
                        line: lineno,
                        msg: format!("bad frequency `{f}`: {e}"),
                    })?,
                ),
                None => (line, 0),
            };
            let entry = LexiconEntry::new(surface, frequency);
            if entry.surface.is_empty() {
                return Err(Error::Parse { line: lineno, msg: "empty surface form".into() });
            }
            lexicon.insert(current.clone(), entry);
        }
        Ok(lexicon)
    }
}

impl fmt::Display for Lexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (class, entries) in &self.entries {
            writeln!(f, "[{class}]")?;
            for e in entries {
                if e.frequency > 0 {
                    writeln!(f, "{}\t{}", e.text(), e.frequency)?;
                } else {
                    writeln!(f, "{}", e.text())?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface: Vec<String>,
    pub frequency: u64,
}

/// Distinct surfaces of pattern-detected spans, most frequent first; ties are
/// broken by the surface's word sequence in lexicographic order.
pub fn harvest_candidates(docs: &[Document], pattern: &SpanPattern, top_n: usize) -> Result<Vec<Candidate>> {
    let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
    for doc in docs {
        for sentence in &doc.sentences {
            let pos = sentence.pos_tags().ok_or_else(|| Error::MissingPos {
                doc: doc.id.clone(),
                sentence: sentence.id,
            })?;
            for (start, end) in detect_spans(&pos, pattern) {
                let surface = sentence.tokens[start..end].iter().map(|t| t.text.clone()).collect();
                *counts.entry(surface).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<Candidate> = counts
        .into_iter()
        .map(|(surface, frequency)| Candidate { surface, frequency })
        .collect();
    ranked.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.surface.cmp(&b.surface)));
    ranked.truncate(top_n);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub surface: String,
    pub classes: Vec<EntityClass>,
}

/// Surface forms listed under two or more classes, sorted by surface.
pub fn validate_unambiguous(lexicon: &Lexicon) -> Vec<Violation> {
    let mut seen: BTreeMap<String, BTreeSet<EntityClass>> = BTreeMap::new();
    for (class, entries) in lexicon.iter() {
        for e in entries {
            seen.entry(e.text()).or_default().insert(class.clone());
        }
    }
    seen.into_iter()
        .filter(|(_, classes)| classes.len() > 1)
        .map(|(surface, classes)| Violation { surface, classes: classes.into_iter().collect() })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchOptions {
    pub case_insensitive: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStats {
    pub matched_entities: usize,
    pub matched_tokens: usize,
    pub labeled_sentences: usize,
    pub unlabeled_sentences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconAnnotation {
    pub documents: Vec<Document>,
    /// Sentences with at least one lexicon match.
    pub labeled: Vec<SentenceKey>,
    pub unlabeled: Vec<SentenceKey>,
    pub stats: AnnotationStats,
}

struct Matcher<'a> {
    by_first: HashMap<String, Vec<(&'a [String], &'a EntityClass)>>,
    case_insensitive: bool,
}

impl<'a> Matcher<'a> {
    fn new(lexicon: &'a Lexicon, opts: MatchOptions) -> Self {
        let mut by_first: HashMap<String, Vec<(&[String], &EntityClass)>> = HashMap::new();
        for (class, entries) in lexicon.iter() {
            for e in entries {
                let key = fold(&e.surface[0], opts.case_insensitive);
                by_first.entry(key).or_default().push((&e.surface, class));
            }
        }
        for list in by_first.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(b.0)));
        }
        Matcher { by_first, case_insensitive: opts.case_insensitive }
    }

    /// Longest entry matching at `start`.
    fn longest_at(&self, sentence: &Sentence, start: usize) -> Option<(usize, &'a EntityClass)> {
        let key = fold(&sentence.tokens[start].text, self.case_insensitive);
        self.by_first.get(&key)?.iter().find_map(|(surface, class)| {
            let end = start + surface.len();
            let fits = end <= sentence.len()
                && surface
                    .iter()
                    .zip(&sentence.tokens[start..end])
                    .all(|(w, t)| fold(w, self.case_insensitive) == fold(&t.text, self.case_insensitive));
            (fits && !sentence.any_protected(start, end)).then_some((end, *class))
        })
    }

    fn annotate(&self, sentence: &mut Sentence) -> (usize, usize) {
        let (mut entities, mut tokens) = (0, 0);
        let mut i = 0;
        while i < sentence.len() {
            match self.longest_at(sentence, i) {
                Some((end, class)) => {
                    sentence.set_span(i, end, class, LabelSource::Lexicon, None);
                    entities += 1;
                    tokens += end - i;
                    i = end;
                }
                None => i += 1,
            }
        }
        (entities, tokens)
    }
}

fn fold(word: &str, case_insensitive: bool) -> String {
    if case_insensitive {
        word.to_lowercase()
    } else {
        word.to_string()
    }
}

/// Exact, longest-match-first, left-to-right lexicon matching. Tokens with
/// gold labels are never relabeled.
pub fn annotate_with_lexicon(docs: &[Document], lexicon: &Lexicon, opts: MatchOptions) -> Result<LexiconAnnotation> {
    let violations = validate_unambiguous(lexicon);
    if !violations.is_empty() {
        return Err(Error::AmbiguousLexicon(violations.into_iter().map(|v| v.surface).collect()));
    }
    let matcher = Matcher::new(lexicon, opts);
    let mut documents = docs.to_vec();
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut stats = AnnotationStats::default();
    for (d, doc) in documents.iter_mut().enumerate() {
        for (s, sentence) in doc.sentences.iter_mut().enumerate() {
            let (entities, tokens) = matcher.annotate(sentence);
            stats.matched_entities += entities;
            stats.matched_tokens += tokens;
            if entities > 0 {
                labeled.push(SentenceKey::new(d, s));
            } else {
                unlabeled.push(SentenceKey::new(d, s));
            }
        }
    }
    stats.labeled_sentences = labeled.len();
    stats.unlabeled_sentences = unlabeled.len();
    Ok(LexiconAnnotation { documents, labeled, unlabeled, stats })
}

/// Keeps entries whose every word is a single subword, then the `top_k` most
/// frequent per class (ties by surface).
pub fn filter_for_mlm(lexicon: &Lexicon, counter: &dyn SubwordCounter, top_k: usize) -> Result<Lexicon> {
    let words: Vec<String> = lexicon
        .iter()
        .flat_map(|(_, entries)| entries.iter().flat_map(|e| e.surface.iter().cloned()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let counts = counter.subword_counts(&words)?;
    if counts.len() != words.len() {
        return Err(Error::Backend(format!("{} subword counts for {} words", counts.len(), words.len())));
    }
    let single: BTreeSet<&String> = words.iter().zip(&counts).filter(|(_, c)| **c == 1).map(|(w, _)| w).collect();

    let mut out = Lexicon::new();
    for (class, entries) in lexicon.iter() {
        let mut kept: Vec<LexiconEntry> = entries
            .iter()
            .filter(|e| e.surface.iter().all(|w| single.contains(w)))
            .cloned()
            .collect();
        kept.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.surface.cmp(&b.surface)));
        kept.truncate(top_k);
        out.entries.insert(class.clone(), kept);
    }
    Ok(out)
}
