//! Deterministic label-correction sieve.
//!
//! Rules read a whole document and write only to sentences inside the
//! current scope. Gold and lexicon labels are never touched. Every label
//! change is recorded as a [`RuleTrace`].

mod discourse;
mod local;

pub use discourse::{rule_affix_strip, rule_multi_mention, rule_ospd, DCandidate};
pub use local::{rule_company_suffix, rule_loc_org_adjacency, rule_sports_score};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityClass, Label, LabelSource, Sentence};
use crate::error::{Error, Result};
use crate::tagger::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    CompanySuffix,
    LocOrgAdjacency,
    SportsScore,
    MultiMention,
    AffixStrip,
    Ospd,
}

impl RuleName {
    pub const ALL: [RuleName; 6] = [
        RuleName::CompanySuffix,
        RuleName::LocOrgAdjacency,
        RuleName::SportsScore,
        RuleName::MultiMention,
        RuleName::AffixStrip,
        RuleName::Ospd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::CompanySuffix => "company_suffix",
            RuleName::LocOrgAdjacency => "loc_org_adjacency",
            RuleName::SportsScore => "sports_score",
            RuleName::MultiMention => "multi_mention",
            RuleName::AffixStrip => "affix_strip",
            RuleName::Ospd => "ospd",
        }
    }

    /// Rules driven by classifier confidence.
    pub fn is_confidence_based(self) -> bool {
        matches!(self, RuleName::MultiMention | RuleName::AffixStrip)
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown rule `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfig {
    pub company_suffixes: Vec<String>,
    pub honorifics: Vec<String>,
    /// Matched against whole tokens.
    pub score_pattern: String,
    /// Confidence above which a span seeds the confidence rules.
    pub threshold: f64,
    pub order: Vec<RuleName>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        RuleConfig {
            company_suffixes: strings(&["Inc.", "Inc", "Corp.", "Corp", "Ltd.", "Ltd", "Co.", "Plc", "LLC", "AG", "NV"]),
            honorifics: strings(&["Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "Sir"]),
            score_pattern: r"\d+-\d+".into(),
            threshold: 0.9,
            order: RuleName::ALL.to_vec(),
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("rule threshold {} outside (0, 1]", self.threshold)));
        }
        if self.company_suffixes.is_empty() || self.honorifics.is_empty() {
            return Err(Error::Config("company suffix and honorific lists must be non-empty".into()));
        }
        self.score_regex()?;
        let mut seen = self.order.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.order.len() {
            return Err(Error::Config("rule order lists a rule twice".into()));
        }
        Ok(())
    }

    pub fn score_regex(&self) -> Result<Regex> {
        Regex::new(&format!("^(?:{})$", self.score_pattern))
            .map_err(|e| Error::Config(format!("bad score pattern `{}`: {e}", self.score_pattern)))
    }

    pub(crate) fn is_suffix(&self, word: &str) -> bool {
        self.company_suffixes.iter().any(|s| s == word)
    }

    pub(crate) fn is_honorific(&self, word: &str) -> bool {
        self.honorifics.iter().any(|s| s == word)
    }
}

/// One label change made by one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub rule: RuleName,
    pub doc: String,
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub before: Vec<Label>,
    pub after: Vec<Label>,
    pub reason: String,
}

pub fn write_traces<W: Write>(traces: &[RuleTrace], out: &mut W) -> Result<()> {
    for t in traces {
        writeln!(out, "{}", serde_json::to_string(t)?)?;
    }
    Ok(())
}

/// Which sentences of a document rules may write to; `None` means all.
pub type Scope<'a> = Option<&'a [bool]>;

/// Options shared by the confidence rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeedFilter {
    /// Only tagger-predicted spans may seed propagation.
    pub tagger_only: bool,
}

pub(crate) struct Editor<'a> {
    pub doc: Document,
    scope: Scope<'a>,
    rule: RuleName,
    pub traces: Vec<RuleTrace>,
}

impl<'a> Editor<'a> {
    pub fn new(doc: &Document, scope: Scope<'a>, rule: RuleName) -> Self {
        Editor { doc: doc.clone(), scope, rule, traces: Vec::new() }
    }

    pub fn writable(&self, s: usize) -> bool {
        self.scope.is_none_or(|m| m.get(s).copied().unwrap_or(false))
    }

    /// Writes `[start, end)` as one `class` entity. Refused outside scope or
    /// when a protected label would change; returns whether anything changed.
    pub fn relabel(&mut self, s: usize, start: usize, end: usize, class: &EntityClass, reason: impl Into<String>) -> bool {
        self.relabel_scored(s, start, end, class, None, reason)
    }

    pub fn relabel_scored(
        &mut self,
        s: usize,
        start: usize,
        end: usize,
        class: &EntityClass,
        confidence: Option<f64>,
        reason: impl Into<String>,
    ) -> bool {
        if !self.writable(s) {
            return false;
        }
        let sentence = &self.doc.sentences[s];
        if sentence.any_protected(start, end) {
            return false;
        }
        let stop = (end + 1).min(sentence.len());
        if end < sentence.len() && sentence.tokens[end].is_protected() && matches!(sentence.tokens[end].label, Label::I(_)) {
            return false;
        }
        let mut next = sentence.clone();
        next.set_span(start, end, class, LabelSource::Rule, confidence);
        self.commit(s, start, stop, next, reason.into())
    }

    fn commit(&mut self, s: usize, start: usize, stop: usize, next: Sentence, reason: String) -> bool {
        let sentence = &self.doc.sentences[s];
        let before: Vec<Label> = sentence.tokens[start..stop].iter().map(|t| t.label.clone()).collect();
        let after: Vec<Label> = next.tokens[start..stop].iter().map(|t| t.label.clone()).collect();
        if before == after {
            return false;
        }
        self.traces.push(RuleTrace {
            rule: self.rule,
            doc: self.doc.id.clone(),
            sentence_id: sentence.id,
            start,
            end: stop,
            before,
            after,
            reason,
        });
        self.doc.sentences[s] = next;
        true
    }

    pub fn finish(self) -> (Document, Vec<RuleTrace>) {
        (self.doc, self.traces)
    }
}

/// Exact token-sequence surface of `[start, end)`.
pub(crate) fn surface(sentence: &Sentence, start: usize, end: usize) -> Vec<String> {
    sentence.tokens[start..end].iter().map(|t| t.text.clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieveOutcome {
    pub document: Document,
    pub d_candidates: Vec<DCandidate>,
    pub traces: Vec<RuleTrace>,
}

/// Applies rules one after another, each seeing the previous one's output.
pub struct Sieve<'a> {
    pub config: &'a RuleConfig,
    pub order: &'a [RuleName],
    pub tagger: Option<&'a dyn Predictor>,
    pub seeds: SeedFilter,
}

impl Sieve<'_> {
    pub fn apply(&self, doc: &Document, scope: Scope<'_>) -> Result<SieveOutcome> {
        let mut document = doc.clone();
        let mut d_candidates = Vec::new();
        let mut traces = Vec::new();
        let score = self.config.score_regex()?;
        let t = self.config.threshold;
        for &rule in self.order {
            let (next, mut tr) = match rule {
                RuleName::CompanySuffix => local::company_suffix(&document, scope, self.config),
                RuleName::LocOrgAdjacency => local::loc_org_adjacency(&document, scope),
                RuleName::SportsScore => local::sports_score(&document, scope, &score),
                RuleName::MultiMention => discourse::multi_mention(&document, scope, t, self.seeds),
                RuleName::AffixStrip => {
                    let tagger = self
                        .tagger
                        .ok_or_else(|| Error::Tagger("affix_strip needs a trained tagger".into()))?;
                    let (next, d, tr) = discourse::affix_strip(&document, scope, tagger, self.config, self.seeds)?;
                    d_candidates.extend(d);
                    (next, tr)
                }
                RuleName::Ospd => discourse::ospd(&document, scope),
            };
            document = next;
            traces.append(&mut tr);
        }
        Ok(SieveOutcome { document, d_candidates, traces })
    }
}

pub fn apply_sieve(
    doc: &Document,
    order: &[RuleName],
    cfg: &RuleConfig,
    tagger: Option<&dyn Predictor>,
) -> Result<SieveOutcome> {
    cfg.validate()?;
    Sieve { config: cfg, order, tagger, seeds: SeedFilter::default() }.apply(doc, None)
}

/// Replays traces onto a document; used to audit a sieve run.
pub fn replay_traces(doc: &Document, traces: &[RuleTrace]) -> Result<Document> {
    let mut out = doc.clone();
    for t in traces {
        let sentence = out
            .sentences
            .iter_mut()
            .find(|s| s.id == t.sentence_id)
            .ok_or_else(|| Error::InvalidArgument(format!("trace names unknown sentence {}", t.sentence_id)))?;
        for (token, label) in sentence.tokens[t.start..t.end].iter_mut().zip(&t.after) {
            token.label = label.clone();
        }
    }
    Ok(out)
}
