use serde::{Deserialize, Serialize};

use super::{EntityClass, EntitySpan, Label, Sentence};
use crate::error::{Error, Result};

/// Label-only view of an entity span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub start: usize,
    pub end: usize,
    pub class: EntityClass,
}

/// Maximal `B-X (I-X)*` runs. A stray `I-X` opens a new chunk, as conlleval does.
pub fn chunks_from_labels(labels: &[Label]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(usize, &EntityClass)> = None;
    for (i, label) in labels.iter().enumerate() {
        match label {
            Label::I(c) if matches!(open, Some((_, oc)) if oc == c) => {}
            _ => {
                if let Some((start, class)) = open.take() {
                    chunks.push(Chunk { start, end: i, class: class.clone() });
                }
                if let Some(c) = label.class() {
                    open = Some((i, c));
                }
            }
        }
    }
    if let Some((start, class)) = open {
        chunks.push(Chunk { start, end: labels.len(), class: class.clone() });
    }
    chunks
}

/// Inverse of [`chunks_from_labels`]; chunks may come in any order.
pub fn labels_from_chunks(chunks: &[Chunk], length: usize) -> Result<Vec<Label>> {
    let mut sorted: Vec<&Chunk> = chunks.iter().collect();
    sorted.sort_by_key(|c| (c.start, c.end));
    for c in &sorted {
        if c.start >= c.end || c.end > length {
            return Err(Error::SpanOutOfBounds { start: c.start, end: c.end, len: length });
        }
    }
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingSpans(pair[0].start, pair[0].end, pair[1].start, pair[1].end));
        }
    }
    let mut labels = vec![Label::O; length];
    for c in sorted {
        labels[c.start] = Label::B(c.class.clone());
        for label in &mut labels[c.start + 1..c.end] {
            *label = Label::I(c.class.clone());
        }
    }
    Ok(labels)
}

/// Entity spans of a sentence. Source comes from the first token; confidence
/// is the minimum over the span's tokens that carry one.
pub fn spans_from_bio(sentence: &Sentence) -> Vec<EntitySpan> {
    let labels = sentence.labels();
    chunks_from_labels(&labels)
        .into_iter()
        .map(|c| {
            let tokens = &sentence.tokens[c.start..c.end];
            let confidence = tokens
                .iter()
                .filter_map(|t| t.confidence)
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
            EntitySpan {
                sentence_id: sentence.id,
                start: c.start,
                end: c.end,
                class: c.class,
                source: tokens[0].source,
                confidence,
            }
        })
        .collect()
}

pub fn bio_from_spans(spans: &[EntitySpan], length: usize) -> Result<Vec<Label>> {
    let chunks: Vec<Chunk> = spans.iter().map(EntitySpan::chunk).collect();
    labels_from_chunks(&chunks, length)
}

/// Rewrites every `I-X` that does not continue an `X` entity into `B-X`.
/// Returns the positions that were repaired.
pub fn repair_bio(labels: &mut [Label]) -> Vec<usize> {
    let mut repaired = Vec::new();
    for i in 0..labels.len() {
        let ok = labels[i].may_follow(if i == 0 { None } else { Some(&labels[i - 1]) });
        if !ok {
            if let Label::I(c) = &labels[i] {
                labels[i] = Label::B(c.clone());
                repaired.push(i);
            }
        }
    }
    repaired
}
