//! Document-level rules: one sense per discourse and the confidence rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{surface, Editor, RuleConfig, RuleName, RuleTrace, Scope, SeedFilter};
use crate::corpus::{Document, EntityClass, EntitySpan, Label, LabelSource, Sentence};
use crate::error::Result;
use crate::tagger::Predictor;

/// A new sentence produced by affix stripping, proposed for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DCandidate {
    pub doc: String,
    pub source_sentence_id: usize,
    pub sentence: Sentence,
    pub reason: String,
}

fn propagating_class(class: &EntityClass) -> bool {
    matches!(class.as_str(), "ORG" | "LOC" | "PER")
}

fn is_seed(span: &EntitySpan, threshold: f64, seeds: SeedFilter) -> bool {
    propagating_class(&span.class)
        && span.confidence.is_some_and(|c| c > threshold)
        && (!seeds.tagger_only || span.source == LabelSource::Tagger)
}

/// Gives every other mention of `words` in the document the label `class`:
/// labeled mentions of another class, and unlabeled exact occurrences.
fn propagate(ed: &mut Editor<'_>, words: &[String], class: &EntityClass, reason: &str) {
    let k = words.len();
    for s in 0..ed.doc.sentences.len() {
        let mut i = 0;
        while i + k <= ed.doc.sentences[s].len() {
            let sentence = &ed.doc.sentences[s];
            let hit = sentence.tokens[i..i + k].iter().zip(words).all(|(t, w)| &t.text == w);
            if !hit {
                i += 1;
                continue;
            }
            let all_o = sentence.tokens[i..i + k].iter().all(|t| t.label.is_outside());
            let exact_other = sentence
                .spans()
                .iter()
                .any(|sp| sp.start == i && sp.end == i + k && &sp.class != class);
            if all_o || exact_other {
                ed.relabel(s, i, i + k, class, reason);
            }
            i += k;
        }
    }
}

pub(crate) fn multi_mention(doc: &Document, scope: Scope<'_>, threshold: f64, seeds: SeedFilter) -> (Document, Vec<RuleTrace>) {
    let mut ed = Editor::new(doc, scope, RuleName::MultiMention);
    let mut best: BTreeMap<Vec<String>, Vec<(f64, EntityClass)>> = BTreeMap::new();
    for sentence in &doc.sentences {
        for span in sentence.spans() {
            if is_seed(&span, threshold, seeds) {
                best.entry(surface(sentence, span.start, span.end))
                    .or_default()
                    .push((span.confidence.unwrap_or(0.0), span.class.clone()));
            }
        }
    }
    for (words, seeds) in best {
        let top = seeds.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let mut winners = seeds.iter().filter(|s| s.0 == top).map(|s| &s.1);
        let class = winners.next().expect("at least one seed").clone();
        if winners.any(|c| *c != class) {
            continue;
        }
        let reason = format!("`{}` is {class} with confidence {top:.3}", words.join(" "));
        propagate(&mut ed, &words, &class, &reason);
    }
    ed.finish()
}

pub(crate) fn ospd(doc: &Document, scope: Scope<'_>) -> (Document, Vec<RuleTrace>) {
    let mut ed = Editor::new(doc, scope, RuleName::Ospd);
    let mut votes: BTreeMap<Vec<String>, BTreeMap<EntityClass, usize>> = BTreeMap::new();
    for sentence in &doc.sentences {
        for span in sentence.spans() {
            *votes
                .entry(surface(sentence, span.start, span.end))
                .or_default()
                .entry(span.class.clone())
                .or_default() += 1;
        }
    }
    for (words, counts) in votes {
        if counts.len() < 2 {
            continue;
        }
        let top = *counts.values().max().expect("non-empty");
        let mut leaders = counts.iter().filter(|(_, n)| **n == top);
        let (class, _) = leaders.next().expect("one leader");
        if leaders.next().is_some() {
            continue;
        }
        let reason = format!("`{}` is mostly {class} ({top} of {})", words.join(" "), counts.values().sum::<usize>());
        for s in 0..ed.doc.sentences.len() {
            for span in ed.doc.sentences[s].spans() {
                if &span.class != class && surface(&ed.doc.sentences[s], span.start, span.end) == words {
                    ed.relabel(s, span.start, span.end, class, reason.clone());
                }
            }
        }
    }
    ed.finish()
}

pub(crate) fn affix_strip(
    doc: &Document,
    scope: Scope<'_>,
    tagger: &dyn Predictor,
    cfg: &RuleConfig,
    seeds: SeedFilter,
) -> Result<(Document, Vec<DCandidate>, Vec<RuleTrace>)> {
    struct Probe {
        source: usize,
        sentence: Sentence,
        start: usize,
        end: usize,
        class: EntityClass,
        affix: String,
    }
    let mut ed = Editor::new(doc, scope, RuleName::AffixStrip);
    let mut probes = Vec::new();
    for s in 0..doc.sentences.len() {
        for span in doc.sentences[s].spans() {
            if span.len() < 2 || !is_seed(&span, cfg.threshold, seeds) {
                continue;
            }
            let sentence = &doc.sentences[s];
            let (affix, rem_start, rem_end) = if cfg.is_suffix(&sentence.tokens[span.end - 1].text) {
                (span.end - 1, span.start, span.end - 1)
            } else if cfg.is_honorific(&sentence.tokens[span.start].text) {
                (span.start, span.start + 1, span.end)
            } else {
                continue;
            };
            let affix_word = sentence.tokens[affix].text.clone();
            let words = surface(sentence, rem_start, rem_end);
            let reason = format!("`{}` without `{affix_word}` is {}", words.join(" "), span.class);
            propagate(&mut ed, &words, &span.class, &reason);

            if ed.writable(s) {
                let mut stripped = sentence.clone();
                stripped.tokens.remove(affix);
                let (start, end) = if affix < rem_start { (rem_start - 1, rem_end - 1) } else { (rem_start, rem_end) };
                stripped.set_span(start, end, &span.class, span.source, span.confidence);
                probes.push(Probe { source: s, sentence: stripped, start, end, class: span.class.clone(), affix: affix_word });
            }
        }
    }

    let inputs: Vec<Sentence> = probes.iter().map(|p| p.sentence.clone()).collect();
    let predictions = if inputs.is_empty() { Vec::new() } else { tagger.predict_batch(&inputs)? };
    let mut candidates = Vec::new();
    for (probe, pred) in probes.into_iter().zip(predictions) {
        let expected: Vec<Label> = (probe.start..probe.end)
            .map(|i| if i == probe.start { Label::B(probe.class.clone()) } else { Label::I(probe.class.clone()) })
            .collect();
        let same = pred.labels.get(probe.start..probe.end) == Some(expected.as_slice())
            && !matches!(pred.labels.get(probe.end), Some(Label::I(_)));
        let confidence = pred.confidence_of(probe.start, probe.end);
        let confident = confidence.is_some_and(|c| c > cfg.threshold);
        if !same || !confident {
            candidates.push(DCandidate {
                doc: doc.id.clone(),
                source_sentence_id: doc.sentences[probe.source].id,
                sentence: probe.sentence,
                reason: format!(
                    "without `{}` the tagger {} (confidence {})",
                    probe.affix,
                    if same { "agrees" } else { "disagrees" },
                    confidence.map_or("none".to_string(), |c| format!("{c:.3}"))
                ),
            });
        }
    }
    let (document, traces) = ed.finish();
    Ok((document, candidates, traces))
}

pub fn rule_ospd(doc: &Document) -> (Document, Vec<RuleTrace>) {
    ospd(doc, None)
}

pub fn rule_multi_mention(doc: &Document, threshold: f64) -> (Document, Vec<RuleTrace>) {
    multi_mention(doc, None, threshold, SeedFilter::default())
}

pub fn rule_affix_strip(
    doc: &Document,
    tagger: &dyn Predictor,
    cfg: &RuleConfig,
) -> Result<(Document, Vec<DCandidate>, Vec<RuleTrace>)> {
    affix_strip(doc, None, tagger, cfg, SeedFilter::default())
}
