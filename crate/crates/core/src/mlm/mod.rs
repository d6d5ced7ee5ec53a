//! Unsupervised span labeling by cloze scoring.
//!
//! A detected span is replaced by one mask per word and every lexicon
//! exemplar with the same word count is substituted in. An exemplar's score
//! is the mean probability over its masked positions; a class scores the
//! maximum over its exemplars. The top class is accepted only when its lead
//! over the runner-up exceeds that class's threshold.
//!
//! The model runtime sits behind [`MlmBackend`]; the core never sees subword
//! vocabularies.

mod stub;
mod wire;

pub use stub::{StubBackend, StubConfig, TableStub, VocabStub};
pub use wire::{serve_mlm, WireMlmBackend};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityClass, EntitySpan, LabelSource, Sentence};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::span_detector::{detect_spans, SpanPattern};

/// Decisions within this distance of the threshold count as ties and abstain.
pub const MARGIN_EPSILON: f64 = 1e-9;

pub trait SubwordCounter {
    /// Number of subword pieces each word is split into.
    fn subword_counts(&self, words: &[String]) -> Result<Vec<usize>>;
}

pub trait MlmBackend: SubwordCounter + Send + Sync {
    /// For each request, for each candidate: the probability of every masked
    /// position, or `None` when the candidate cannot fill the mask.
    fn fill(&self, requests: &[ClozeRequest]) -> Result<Vec<Vec<Option<Vec<f64>>>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub class: EntityClass,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeRequest {
    pub tokens: Vec<String>,
    pub span: (usize, usize),
    pub candidates: Vec<Candidate>,
}

impl ClozeRequest {
    pub fn mask_count(&self) -> usize {
        self.span.1 - self.span.0
    }

    pub fn validate(&self) -> Result<()> {
        let (start, end) = self.span;
        if start >= end || end > self.tokens.len() {
            return Err(Error::SpanOutOfBounds { start, end, len: self.tokens.len() });
        }
        if self.candidates.iter().any(|c| c.words.is_empty()) {
            return Err(Error::InvalidArgument("empty cloze candidate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFill {
    pub mean: f64,
    pub token_probs: Vec<f64>,
}

/// Per-candidate fills for a single request.
pub fn mask_fill_probabilities(backend: &dyn MlmBackend, request: &ClozeRequest) -> Result<Vec<Option<CandidateFill>>> {
    Ok(mask_fill_batch(backend, std::slice::from_ref(request))?.pop().unwrap_or_default())
}

/// Sends a batch and checks the shape and range of every answer. Candidates
/// whose word count differs from the mask count are always ineligible.
pub fn mask_fill_batch(backend: &dyn MlmBackend, requests: &[ClozeRequest]) -> Result<Vec<Vec<Option<CandidateFill>>>> {
    for r in requests {
        r.validate()?;
    }
    if requests.is_empty() {
        return Ok(Vec::new());
    }
    let raw = backend.fill(requests)?;
    if raw.len() != requests.len() {
        return Err(Error::Protocol(format!("{} results for {} requests", raw.len(), requests.len())));
    }
    requests
        .iter()
        .zip(raw)
        .map(|(req, per_candidate)| {
            if per_candidate.len() != req.candidates.len() {
                return Err(Error::Protocol(format!(
                    "{} results for {} candidates",
                    per_candidate.len(),
                    req.candidates.len()
                )));
            }
            let masks = req.mask_count();
            req.candidates
                .iter()
                .zip(per_candidate)
                .map(|(cand, probs)| {
                    let Some(probs) = probs else { return Ok(None) };
                    if cand.words.len() != masks {
                        return Ok(None);
                    }
                    if probs.len() != masks {
                        return Err(Error::Protocol(format!("{} probabilities for {masks} masks", probs.len())));
                    }
                    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                        return Err(Error::Protocol(format!("probability {p} outside [0, 1]")));
                    }
                    let mean = probs.iter().sum::<f64>() / masks as f64;
                    Ok(Some(CandidateFill { mean, token_probs: probs }))
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: EntityClass,
    pub score: f64,
    pub best_exemplar: Vec<String>,
}

/// Per-class thresholds on the top-two score margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdTable {
    pub per_class: BTreeMap<EntityClass, f64>,
    /// Used for classes missing from `per_class`.
    pub fallback: f64,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        let per_class = [("ORG", 0.28), ("PER", 0.2), ("LOC", 0.1), ("MISC", 0.05)]
            .into_iter()
            .map(|(c, t)| (EntityClass::from(c), t))
            .collect();
        ThresholdTable { per_class, fallback: 0.0 }
    }
}

impl ThresholdTable {
    pub fn uniform(value: f64) -> Self {
        ThresholdTable { per_class: BTreeMap::new(), fallback: value }
    }

    pub fn get(&self, class: &EntityClass) -> f64 {
        self.per_class.get(class).copied().unwrap_or(self.fallback)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |t: f64| (0.0..=1.0).contains(&t);
        if !ok(self.fallback) || !self.per_class.values().all(|t| ok(*t)) {
            return Err(Error::Config("MLM thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Lexicon exemplars whose word count equals the span length.
pub fn eligible_candidates(lexicon: &Lexicon, span_len: usize) -> Vec<Candidate> {
    lexicon
        .iter()
        .flat_map(|(class, entries)| {
            entries.iter().filter(|e| e.surface.len() == span_len).map(move |e| Candidate {
                class: class.clone(),
                words: e.surface.clone(),
            })
        })
        .collect()
}

/// Max over exemplars of the mean fill probability, per class. Classes
/// without an eligible exemplar are left out.
pub fn aggregate_scores(candidates: &[Candidate], fills: &[Option<CandidateFill>]) -> Vec<ClassScore> {
    let mut best: BTreeMap<&EntityClass, (f64, &Vec<String>)> = BTreeMap::new();
    for (cand, fill) in candidates.iter().zip(fills) {
        let Some(fill) = fill else { continue };
        best.entry(&cand.class)
            .and_modify(|(score, words)| {
                if fill.mean > *score {
                    *score = fill.mean;
                    *words = &cand.words;
                }
            })
            .or_insert((fill.mean, &cand.words));
    }
    best.into_iter()
        .map(|(class, (score, words))| ClassScore {
            class: class.clone(),
            score,
            best_exemplar: words.clone(),
        })
        .collect()
}

pub fn score_span(
    tokens: &[String],
    span: (usize, usize),
    lexicon: &Lexicon,
    backend: &dyn MlmBackend,
) -> Result<Vec<ClassScore>> {
    let candidates = eligible_candidates(lexicon, span.1.saturating_sub(span.0));
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let request = ClozeRequest { tokens: tokens.to_vec(), span, candidates };
    let fills = mask_fill_probabilities(backend, &request)?;
    Ok(aggregate_scores(&request.candidates, &fills))
}

/// Accepts the best class when its lead over the second best (0 when there
/// is none) is strictly greater than the class threshold. Exact ties abstain.
pub fn classify_span(scores: &[ClassScore], thresholds: &ThresholdTable) -> Option<(EntityClass, f64)> {
    let mut ranked: Vec<&ClassScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let top = ranked.first()?;
    let runner_up = ranked.get(1).map_or(0.0, |s| s.score);
    if ranked.len() > 1 && top.score == runner_up {
        return None;
    }
    let margin = top.score - runner_up;
    (margin - thresholds.get(&top.class) > MARGIN_EPSILON).then(|| (top.class.clone(), margin))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlmOutcome {
    pub sentence: Sentence,
    pub changed: bool,
    pub accepted: Vec<EntitySpan>,
}

/// Batched MLM annotation over many sentences.
pub struct MlmAnnotator<'a> {
    pub backend: &'a dyn MlmBackend,
    pub lexicon: &'a Lexicon,
    pub thresholds: &'a ThresholdTable,
    pub pattern: &'a SpanPattern,
    /// Maximum number of cloze requests per backend call.
    pub batch_size: usize,
}

impl MlmAnnotator<'_> {
    pub fn annotate(&self, sentences: &[Sentence]) -> Result<Vec<MlmOutcome>> {
        struct Job {
            sentence: usize,
            span: (usize, usize),
            request: ClozeRequest,
        }
        let mut jobs = Vec::new();
        for (idx, sentence) in sentences.iter().enumerate() {
            let pos = sentence.pos_tags().ok_or_else(|| Error::MissingPos {
                doc: String::new(),
                sentence: sentence.id,
            })?;
            let tokens: Vec<String> = sentence.tokens.iter().map(|t| t.text.clone()).collect();
            for (start, end) in detect_spans(&pos, self.pattern) {
                if sentence.any_protected(start, end) {
                    continue;
                }
                let candidates = eligible_candidates(self.lexicon, end - start);
                if candidates.is_empty() {
                    continue;
                }
                jobs.push(Job {
                    sentence: idx,
                    span: (start, end),
                    request: ClozeRequest { tokens: tokens.clone(), span: (start, end), candidates },
                });
            }
        }

        let mut outcomes: Vec<MlmOutcome> = sentences
            .iter()
            .map(|s| MlmOutcome { sentence: s.clone(), changed: false, accepted: Vec::new() })
            .collect();
        for batch in jobs.chunks(self.batch_size.max(1)) {
            let requests: Vec<ClozeRequest> = batch.iter().map(|j| j.request.clone()).collect();
            let fills = mask_fill_batch(self.backend, &requests)?;
            for (job, fill) in batch.iter().zip(fills) {
                let scores = aggregate_scores(&job.request.candidates, &fill);
                if let Some((class, _)) = classify_span(&scores, self.thresholds) {
                    let score = scores.iter().find(|s| s.class == class).map_or(0.0, |s| s.score);
                    let out = &mut outcomes[job.sentence];
                    let (start, end) = job.span;
                    out.sentence.set_span(start, end, &class, LabelSource::Mlm, Some(score));
                    out.accepted.push(EntitySpan {
                        sentence_id: out.sentence.id,
                        start,
                        end,
                        class,
                        source: LabelSource::Mlm,
                        confidence: Some(score),
                    });
                }
            }
        }
        for (out, original) in outcomes.iter_mut().zip(sentences) {
            out.changed = out.sentence.label_diff(original) > 0;
        }
        Ok(outcomes)
    }
}

/// Labels the detected spans of one sentence. Spans touching a gold or
/// lexicon label are skipped whole.
pub fn annotate_sentence_mlm(
    sentence: &Sentence,
    lexicon: &Lexicon,
    thresholds: &ThresholdTable,
    backend: &dyn MlmBackend,
    pattern: &SpanPattern,
) -> Result<(Sentence, bool)> {
    let annotator = MlmAnnotator { backend, lexicon, thresholds, pattern, batch_size: 64 };
    let mut out = annotator.annotate(std::slice::from_ref(sentence))?;
    let outcome = out.pop().expect("one outcome per sentence");
    Ok((outcome.sentence, outcome.changed))
}
