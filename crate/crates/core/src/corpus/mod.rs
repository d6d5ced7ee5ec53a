//! Documents, sentences and tokens with BIO labels and label provenance.
//!
//! Every token carries exactly one [`LabelSource`]. Labels that come from
//! gold data or from the seed lexicon are *protected*: no downstream stage
//! may overwrite them.

mod bio;
mod io;

pub use bio::{bio_from_spans, chunks_from_labels, labels_from_chunks, repair_bio, spans_from_bio, Chunk};
pub use io::{read_corpus, read_corpus_str, write_corpus, write_corpus_string, ColumnConfig, DiscourseFallback};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Entity class name such as `PER` or `ORG`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityClass(String);

impl EntityClass {
    pub fn new(name: impl Into<String>) -> Self {
        EntityClass(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityClass {
    fn from(s: &str) -> Self {
        EntityClass(s.to_string())
    }
}

/// The four CoNLL-2003 classes.
pub const DEFAULT_CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];

pub fn default_classes() -> Vec<EntityClass> {
    DEFAULT_CLASSES.iter().map(|c| EntityClass::from(*c)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    O,
    B(EntityClass),
    I(EntityClass),
}

impl Label {
    pub fn class(&self) -> Option<&EntityClass> {
        match self {
            Label::O => None,
            Label::B(c) | Label::I(c) => Some(c),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Label::O)
    }

    /// `true` when `self` may legally follow `previous` (or open a sentence
    /// when `previous` is `None`).
    pub fn may_follow(&self, previous: Option<&Label>) -> bool {
        match self {
            Label::I(c) => matches!(previous, Some(Label::B(p)) | Some(Label::I(p)) if p == c),
            _ => true,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::O => f.write_str("O"),
            Label::B(c) => write!(f, "B-{c}"),
            Label::I(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Label::O);
        }
        let invalid = || Error::InvalidLabel(s.to_string());
        let (prefix, class) = s.split_once('-').ok_or_else(invalid)?;
        if class.is_empty() || class.chars().any(char::is_whitespace) {
            return Err(invalid());
        }
        match prefix {
            "B" => Ok(Label::B(EntityClass::from(class))),
            "I" => Ok(Label::I(EntityClass::from(class))),
            _ => Err(invalid()),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a token's current label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Gold,
    Lexicon,
    Mlm,
    Tagger,
    Rule,
    OutsideDefault,
}

impl LabelSource {
    /// Gold and lexicon labels are never overwritten by later stages.
    pub fn is_protected(self) -> bool {
        matches!(self, LabelSource::Gold | LabelSource::Lexicon)
    }

    /// Sources whose labels carry a confidence value.
    pub fn carries_confidence(self) -> bool {
        matches!(self, LabelSource::Mlm | LabelSource::Tagger)
    }

    /// Rule labels keep the confidence of the span they rewrote, if any.
    pub fn may_carry_confidence(self) -> bool {
        self.carries_confidence() || self == LabelSource::Rule
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Gold => "gold",
            LabelSource::Lexicon => "lexicon",
            LabelSource::Mlm => "mlm",
            LabelSource::Tagger => "tagger",
            LabelSource::Rule => "rule",
            LabelSource::OutsideDefault => "default",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gold" => LabelSource::Gold,
            "lexicon" => LabelSource::Lexicon,
            "mlm" => LabelSource::Mlm,
            "tagger" => LabelSource::Tagger,
            "rule" => LabelSource::Rule,
            "default" => LabelSource::OutsideDefault,
            other => return Err(Error::InvalidArgument(format!("unknown label source `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub pos: Option<String>,
    pub label: Label,
    pub source: LabelSource,
    pub confidence: Option<f64>,
}

impl Token {
    /// An unlabeled token (`O`, default source).
    pub fn new(text: impl Into<String>, pos: Option<&str>) -> Self {
        Token {
            text: text.into(),
            pos: pos.map(str::to_string),
            label: Label::O,
            source: LabelSource::OutsideDefault,
            confidence: None,
        }
    }

    pub fn with_label(mut self, label: Label, source: LabelSource, confidence: Option<f64>) -> Self {
        self.label = label;
        self.source = source;
        self.confidence = confidence;
        self
    }

    pub fn is_protected(&self) -> bool {
        self.source.is_protected()
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() || self.text.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("token text {:?} is empty or contains whitespace", self.text)));
        }
        match self.confidence {
            Some(c) if !self.source.may_carry_confidence() => {
                Err(Error::InvalidArgument(format!("{} label must not carry a confidence ({c})", self.source)))
            }
            Some(c) if !(0.0..=1.0).contains(&c) => Err(Error::InvalidArgument(format!("confidence {c} outside [0, 1]"))),
            None if self.source.carries_confidence() => {
                Err(Error::InvalidArgument(format!("{} label without confidence", self.source)))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: usize, tokens: Vec<Token>) -> Self {
        Sentence { id, tokens }
    }

    /// Builds an unlabeled sentence from parallel word and POS slices.
    pub fn from_words(id: usize, words: &[&str], pos: &[&str]) -> Self {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, w)| Token::new(*w, pos.get(i).copied()))
            .collect();
        Sentence { id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// POS tags, or `None` if any token lacks one.
    pub fn pos_tags(&self) -> Option<Vec<&str>> {
        self.tokens.iter().map(|t| t.pos.as_deref()).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.tokens.iter().map(|t| t.label.clone()).collect()
    }

    pub fn is_bio_valid(&self) -> bool {
        let mut previous = None;
        for token in &self.tokens {
            if !token.label.may_follow(previous) {
                return false;
            }
            previous = Some(&token.label);
        }
        true
    }

    pub fn has_entities(&self) -> bool {
        self.tokens.iter().any(|t| !t.label.is_outside())
    }

    pub fn any_protected(&self, start: usize, end: usize) -> bool {
        self.tokens[start..end].iter().any(Token::is_protected)
    }

    pub fn spans(&self) -> Vec<crate::corpus::EntitySpan> {
        spans_from_bio(self)
    }

    /// Number of tokens whose label differs from `other`'s.
    pub fn label_diff(&self, other: &Sentence) -> usize {
        self.tokens
            .iter()
            .zip(&other.tokens)
            .filter(|(a, b)| a.label != b.label)
            .count()
    }

    /// Writes `[start, end)` as one entity of `class`. A dangling `I-` right
    /// after the span is turned into a `B-` so the sequence stays valid.
    pub fn set_span(
        &mut self,
        start: usize,
        end: usize,
        class: &EntityClass,
        source: LabelSource,
        confidence: Option<f64>,
    ) {
        for (i, token) in self.tokens[start..end].iter_mut().enumerate() {
            token.label = if i == 0 { Label::B(class.clone()) } else { Label::I(class.clone()) };
            token.source = source;
            token.confidence = confidence;
        }
        self.reopen_after(end);
    }

    /// Resets `[start, end)` to `O` with the given source.
    pub fn clear_span(&mut self, start: usize, end: usize, source: LabelSource) {
        for token in &mut self.tokens[start..end] {
            token.label = Label::O;
            token.source = source;
            token.confidence = None;
        }
        self.reopen_after(end);
    }

    fn reopen_after(&mut self, end: usize) {
        if let Some(next) = self.tokens.get_mut(end) {
            if let Label::I(c) = &next.label {
                next.label = Label::B(c.clone());
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for token in &self.tokens {
            token.validate()?;
        }
        if !self.is_bio_valid() {
            return Err(Error::InvalidArgument(format!("sentence {} is not BIO-valid", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        Document { id: id.into(), sentences }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidArgument("empty document id".into()));
        }
        for pair in self.sentences.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::InvalidArgument(format!(
                    "document {}: sentence ids not ascending ({} then {})",
                    self.id, pair[0].id, pair[1].id
                )));
            }
        }
        self.sentences.iter().try_for_each(Sentence::validate)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Position of a sentence inside a corpus: document index and sentence index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceKey {
    pub doc: usize,
    pub index: usize,
}

impl SentenceKey {
    pub fn new(doc: usize, index: usize) -> Self {
        SentenceKey { doc, index }
    }
}

/// Every sentence key of a corpus, in corpus order.
pub fn sentence_keys(docs: &[Document]) -> Vec<SentenceKey> {
    docs.iter()
        .enumerate()
        .flat_map(|(d, doc)| (0..doc.sentences.len()).map(move |i| SentenceKey::new(d, i)))
        .collect()
}

/// A contiguous labeled token range `[start, end)` inside one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub class: EntityClass,
    pub source: LabelSource,
    pub confidence: Option<f64>,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn chunk(&self) -> Chunk {
        Chunk {
            start: self.start,
            end: self.end,
            class: self.class.clone(),
        }
    }

    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start < end && start < self.end
    }

    pub fn surface<'a>(&self, sentence: &'a Sentence) -> Vec<&'a str> {
        sentence.tokens[self.start..self.end].iter().map(|t| t.text.as_str()).collect()
    }
}
