//! Dynamic window filtering: cut sparsely labeled sentences into training
//! segments that leave out O-labeled proper nouns, which are most likely
//! entities the weak annotation missed.
//!
//! Each labeled entity opens a window of half-width `W` that keeps growing
//! token by token until it meets a wall (an O-labeled proper noun) or the
//! sentence edge. Overlapping or touching windows merge. Since growth only
//! stops at walls, the result is every maximal wall-free stretch that holds
//! at least one entity token; `W` is only the starting size.

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Sentence, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window: usize,
    /// Treat O-labeled NNPS tokens as walls too.
    pub nnps_walls: bool,
    /// Emit the wall-free parts of sentences without any entity.
    pub admit_unlabeled: bool,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { window: 5, nnps_walls: true, admit_unlabeled: false }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSegment {
    pub sentence_id: usize,
    pub start: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
}

impl TrainingSegment {
    pub fn whole(sentence: &Sentence) -> Self {
        TrainingSegment {
            sentence_id: sentence.id,
            start: 0,
            end: sentence.len(),
            tokens: sentence.tokens.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.tokens.iter().map(|t| t.label.clone()).collect()
    }
}

pub fn is_wall(token: &Token, cfg: &WindowConfig) -> bool {
    token.label.is_outside()
        && match token.pos.as_deref() {
            Some("NNP") => true,
            Some("NNPS") => cfg.nnps_walls,
            _ => false,
        }
}

pub fn filter_sentence(sentence: &Sentence, cfg: &WindowConfig) -> Result<Vec<TrainingSegment>> {
    cfg.validate()?;
    if sentence.pos_tags().is_none() {
        return Err(Error::MissingPos { doc: String::new(), sentence: sentence.id });
    }
    let n = sentence.len();
    let wall: Vec<bool> = sentence.tokens.iter().map(|t| is_wall(t, cfg)).collect();
    let has_entity = sentence.has_entities();

    let mut windows: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if sentence.tokens[i].label.is_outside() {
            i += 1;
            continue;
        }
        let mut end = i;
        while end < n && !sentence.tokens[end].label.is_outside() {
            end += 1;
        }
        let mut lo = i;
        while lo > 0 && !wall[lo - 1] {
            lo -= 1;
        }
        let mut hi = end;
        while hi < n && !wall[hi] {
            hi += 1;
        }
        match windows.last_mut() {
            Some(last) if last.1 >= lo => last.1 = last.1.max(hi),
            _ => windows.push((lo, hi)),
        }
        i = end;
    }

    if !has_entity && cfg.admit_unlabeled {
        let mut start = 0;
        for j in 0..=n {
            if j == n || wall[j] {
                if j > start {
                    windows.push((start, j));
                }
                start = j + 1;
            }
        }
    }

    Ok(windows
        .into_iter()
        .map(|(start, end)| TrainingSegment {
            sentence_id: sentence.id,
            start,
            end,
            tokens: sentence.tokens[start..end].to_vec(),
        })
        .collect())
}

pub fn filter_sentences<'a, I>(sentences: I, cfg: &WindowConfig) -> Result<Vec<TrainingSegment>>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut out = Vec::new();
    for s in sentences {
        out.extend(filter_sentence(s, cfg)?);
    }
    Ok(out)
}
