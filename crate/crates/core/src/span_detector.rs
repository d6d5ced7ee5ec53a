//! Candidate entity spans from POS tags.
//!
//! The pattern is `P+ (IN P+)?` where `P` is any proper-noun tag. Matches are
//! leftmost-longest and non-overlapping; the optional preposition tail is
//! taken whenever it is present, and at most one tail is allowed per match.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanPattern {
    pub proper_noun_tags: BTreeSet<String>,
    pub preposition_tag: String,
}

impl Default for SpanPattern {
    fn default() -> Self {
        SpanPattern {
            proper_noun_tags: ["NNP", "NNPS"].iter().map(|s| s.to_string()).collect(),
            preposition_tag: "IN".to_string(),
        }
    }
}

impl SpanPattern {
    pub fn validate(&self) -> Result<()> {
        if self.proper_noun_tags.is_empty() || self.preposition_tag.is_empty() {
            return Err(Error::Config("span pattern tag sets must be non-empty".into()));
        }
        if self.proper_noun_tags.contains(&self.preposition_tag) {
            return Err(Error::Config("preposition tag overlaps proper-noun tags".into()));
        }
        Ok(())
    }

    fn is_proper<S: AsRef<str>>(&self, tag: &S) -> bool {
        self.proper_noun_tags.contains(tag.as_ref())
    }

    fn proper_run_end<S: AsRef<str>>(&self, pos: &[S], from: usize) -> usize {
        let mut i = from;
        while i < pos.len() && self.is_proper(&pos[i]) {
            i += 1;
        }
        i
    }
}

/// All `[start, end)` matches of the pattern, left to right.
pub fn detect_spans<S: AsRef<str>>(pos: &[S], pattern: &SpanPattern) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < pos.len() {
        if !pattern.is_proper(&pos[i]) {
            i += 1;
            continue;
        }
        let mut end = pattern.proper_run_end(pos, i);
        if end + 1 < pos.len() && pos[end].as_ref() == pattern.preposition_tag && pattern.is_proper(&pos[end + 1]) {
            end = pattern.proper_run_end(pos, end + 1);
        }
        spans.push((i, end));
        i = end;
    }
    spans
}
