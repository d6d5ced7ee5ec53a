//! Deterministic in-process backends for tests, demos and the synthetic
//! experiment.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Candidate, ClozeRequest, MlmBackend, SubwordCounter};
use crate::corpus::EntityClass;
use crate::error::Result;

type FillFn = dyn Fn(&ClozeRequest, &Candidate) -> Option<Vec<f64>> + Send + Sync;

/// Fixed probabilities keyed by the candidate's surface form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableStub {
    /// Per-mask probability for candidates not listed in `fills`; unlisted
    /// candidates are ineligible when unset.
    pub default: Option<f64>,
    pub fills: BTreeMap<String, Vec<f64>>,
    pub subwords: BTreeMap<String, usize>,
}

/// Knows the true class of every vocabulary word. A mask whose original word
/// belongs to the candidate's class gets `hit`, another known class `miss`,
/// an unknown word `unknown`; a hash of the word pair adds up to `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabStub {
    pub word_classes: BTreeMap<String, EntityClass>,
    pub hit: f64,
    pub miss: f64,
    pub unknown: f64,
    pub noise: f64,
    pub seed: u64,
    /// Words reported as splitting into several subwords.
    pub multi_subword: BTreeSet<String>,
}

impl Default for VocabStub {
    fn default() -> Self {
        VocabStub {
            word_classes: BTreeMap::new(),
            hit: 0.8,
            miss: 0.05,
            unknown: 0.02,
            noise: 0.0,
            seed: 0,
            multi_subword: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StubConfig {
    Table(TableStub),
    Vocab(VocabStub),
}

enum Kind {
    Fn(Box<FillFn>),
    Table(TableStub),
    Vocab(VocabStub),
}

pub struct StubBackend {
    kind: Kind,
}

impl StubBackend {
    /// Probabilities from a closure; every word counts as one subword.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ClozeRequest, &Candidate) -> Option<Vec<f64>> + Send + Sync + 'static,
    {
        StubBackend { kind: Kind::Fn(Box::new(f)) }
    }

    pub fn from_config(cfg: StubConfig) -> Self {
        match cfg {
            StubConfig::Table(t) => StubBackend { kind: Kind::Table(t) },
            StubConfig::Vocab(v) => StubBackend { kind: Kind::Vocab(v) },
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(StubBackend::from_config(serde_json::from_str(&text)?))
    }

    fn fill_one(&self, req: &ClozeRequest, cand: &Candidate) -> Option<Vec<f64>> {
        let masks = req.mask_count();
        if cand.words.len() != masks {
            return None;
        }
        match &self.kind {
            Kind::Fn(f) => f(req, cand),
            Kind::Table(t) => match t.fills.get(&cand.words.join(" ")) {
                Some(p) if p.len() == masks => Some(p.clone()),
                Some(_) => None,
                None => t.default.map(|p| vec![p; masks]),
            },
            Kind::Vocab(v) => Some(
                (0..masks)
                    .map(|i| {
                        let original = &req.tokens[req.span.0 + i];
                        let base = match v.word_classes.get(original) {
                            Some(c) if *c == cand.class => v.hit,
                            Some(_) => v.miss,
                            None => v.unknown,
                        };
                        let jitter = unit_hash(v.seed, original, &cand.words[i]) * v.noise;
                        (base + jitter).clamp(0.0, 1.0)
                    })
                    .collect(),
            ),
        }
    }
}

impl SubwordCounter for StubBackend {
    fn subword_counts(&self, words: &[String]) -> Result<Vec<usize>> {
        Ok(words
            .iter()
            .map(|w| match &self.kind {
                Kind::Fn(_) => 1,
                Kind::Table(t) => t.subwords.get(w).copied().unwrap_or(1),
                Kind::Vocab(v) => {
                    if v.multi_subword.contains(w) {
                        2
                    } else {
                        1
                    }
                }
            })
            .collect())
    }
}

impl MlmBackend for StubBackend {
    fn fill(&self, requests: &[ClozeRequest]) -> Result<Vec<Vec<Option<Vec<f64>>>>> {
        Ok(requests
            .iter()
            .map(|r| r.candidates.iter().map(|c| self.fill_one(r, c)).collect())
            .collect())
    }
}

/// FNV-1a of the inputs mapped to [-1, 1].
fn unit_hash(seed: u64, a: &str, b: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for byte in a.bytes().chain([0xff]).chain(b.bytes()) {
        h ^= u64::from(byte);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}
