//! Sentence-local rules.

use regex::Regex;

use super::{Editor, RuleConfig, RuleName, RuleTrace, Scope};
use crate::corpus::{Document, EntityClass};
use crate::error::Result;

fn org() -> EntityClass {
    EntityClass::from("ORG")
}

/// PER spans ending in a company suffix, or followed by an unlabeled one,
/// become ORG together with the suffix. Local rules keep the confidence of
/// the span they rewrite so later confidence rules can still use it.
pub(crate) fn company_suffix(doc: &Document, scope: Scope<'_>, cfg: &RuleConfig) -> (Document, Vec<RuleTrace>) {
    let mut ed = Editor::new(doc, scope, RuleName::CompanySuffix);
    for s in 0..ed.doc.sentences.len() {
        for span in ed.doc.sentences[s].spans() {
            if span.class.as_str() != "PER" {
                continue;
            }
            let sentence = &ed.doc.sentences[s];
            let last = &sentence.tokens[span.end - 1].text;
            let end = if cfg.is_suffix(last) {
                span.end
            } else {
                match sentence.tokens.get(span.end) {
                    Some(next) if cfg.is_suffix(&next.text) && next.label.is_outside() => span.end + 1,
                    _ => continue,
                }
            };
            let suffix = sentence.tokens[end - 1].text.clone();
            let reason = format!("PER span with company suffix `{suffix}`");
            ed.relabel_scored(s, span.start, end, &org(), span.confidence, reason);
        }
    }
    ed.finish()
}

/// Chains of directly adjacent LOC and ORG spans merge into one ORG span.
pub(crate) fn loc_org_adjacency(doc: &Document, scope: Scope<'_>) -> (Document, Vec<RuleTrace>) {
    let mut ed = Editor::new(doc, scope, RuleName::LocOrgAdjacency);
    for s in 0..ed.doc.sentences.len() {
        let spans = ed.doc.sentences[s].spans();
        let mut i = 0;
        while i < spans.len() {
            let is_lo = |k: usize| matches!(spans[k].class.as_str(), "LOC" | "ORG");
            if !is_lo(i) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < spans.len() && is_lo(j + 1) && spans[j + 1].start == spans[j].end {
                j += 1;
            }
            let chain = &spans[i..=j];
            let mixed = chain.iter().any(|x| x.class.as_str() == "LOC") && chain.iter().any(|x| x.class.as_str() == "ORG");
            if mixed {
                let confidence = chain.iter().try_fold(1.0f64, |m, x| x.confidence.map(|c| m.min(c)));
                let (start, end) = (chain[0].start, chain[chain.len() - 1].end);
                ed.relabel_scored(s, start, end, &org(), confidence, "LOC span adjacent to ORG span");
            }
            i = j + 1;
        }
    }
    ed.finish()
}

fn is_punctuation(word: &str) -> bool {
    word.chars().all(|c| c.is_ascii_punctuation())
}

fn is_integer(word: &str) -> bool {
    !word.is_empty() && word.chars().all(|c| c.is_ascii_digit())
}

/// LOC spans followed (punctuation skipped) by a score token, or by two
/// integers in a row, become ORG.
pub(crate) fn sports_score(doc: &Document, scope: Scope<'_>, score: &Regex) -> (Document, Vec<RuleTrace>) {
    let mut ed = Editor::new(doc, scope, RuleName::SportsScore);
    for s in 0..ed.doc.sentences.len() {
        for span in ed.doc.sentences[s].spans() {
            if span.class.as_str() != "LOC" {
                continue;
            }
            let sentence = &ed.doc.sentences[s];
            let mut after = sentence.tokens[span.end..]
                .iter()
                .map(|t| t.text.as_str())
                .filter(|w| !is_punctuation(w));
            let reason = match (after.next(), after.next()) {
                (Some(a), _) if score.is_match(a) => format!("LOC span followed by score `{a}`"),
                (Some(a), Some(b)) if is_integer(a) && is_integer(b) => format!("LOC span followed by `{a}` `{b}`"),
                _ => continue,
            };
            ed.relabel_scored(s, span.start, span.end, &org(), span.confidence, reason);
        }
    }
    ed.finish()
}

pub fn rule_company_suffix(doc: &Document, cfg: &RuleConfig) -> (Document, Vec<RuleTrace>) {
    company_suffix(doc, None, cfg)
}

pub fn rule_loc_org_adjacency(doc: &Document) -> (Document, Vec<RuleTrace>) {
    loc_org_adjacency(doc, None)
}

pub fn rule_sports_score(doc: &Document, cfg: &RuleConfig) -> Result<(Document, Vec<RuleTrace>)> {
    Ok(sports_score(doc, None, &cfg.score_regex()?))
}
