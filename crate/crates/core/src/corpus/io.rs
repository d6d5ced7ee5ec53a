//! Token-per-line column format.
//!
//! Columns are whitespace separated, a blank line ends a sentence and a line
//! whose first column is the document marker (default `-DOCSTART-`) starts a
//! new document. Missing optional values are written as `_`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{repair_bio, Document, Label, LabelSource, Sentence, Token};
use crate::error::{Error, Result};

/// How to group sentences when the stream has no document markers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscourseFallback {
    /// Every sentence is its own document, so document-level rules see no
    /// cross-sentence context.
    #[default]
    PerSentence,
    WholeCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnConfig {
    pub text: usize,
    pub pos: Option<usize>,
    pub label: Option<usize>,
    pub source: Option<usize>,
    pub confidence: Option<usize>,
    /// Expected number of columns; inferred from the first data line if unset.
    pub columns: Option<usize>,
    pub doc_marker: Option<String>,
    /// Repair invalid `I-` transitions instead of failing.
    pub repair_bio: bool,
    /// Source assigned to labels read without a source column.
    pub label_source: LabelSource,
    pub discourse_fallback: DiscourseFallback,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        ColumnConfig::conll2003()
    }
}

impl ColumnConfig {
    /// `word POS chunk NER`, labels read as gold.
    pub fn conll2003() -> Self {
        ColumnConfig {
            text: 0,
            pos: Some(1),
            label: Some(3),
            source: None,
            confidence: None,
            columns: None,
            doc_marker: Some("-DOCSTART-".to_string()),
            repair_bio: true,
            label_source: LabelSource::Gold,
            discourse_fallback: DiscourseFallback::PerSentence,
        }
    }

    /// CoNLL-2003 layout with the label column ignored.
    pub fn unlabeled() -> Self {
        ColumnConfig {
            label: None,
            ..ColumnConfig::conll2003()
        }
    }

    /// `word POS label source confidence`, used for pipeline outputs.
    pub fn provenance() -> Self {
        ColumnConfig {
            label: Some(2),
            source: Some(3),
            confidence: Some(4),
            ..ColumnConfig::conll2003()
        }
    }

    fn width(&self) -> usize {
        self.columns.unwrap_or_else(|| {
            [Some(self.text), self.pos, self.label, self.source, self.confidence]
                .into_iter()
                .flatten()
                .max()
                .unwrap_or(0)
                + 1
        })
    }
}

struct PendingToken {
    token: Token,
    line: usize,
}

struct Reader<'a> {
    cfg: &'a ColumnConfig,
    expected_columns: Option<usize>,
    next_sentence_id: usize,
    pending: Vec<PendingToken>,
    loose: Vec<Sentence>,
    docs: Vec<Vec<Sentence>>,
    saw_marker: bool,
}

impl Reader<'_> {
    fn current(&mut self) -> &mut Vec<Sentence> {
        if self.saw_marker {
            self.docs.last_mut().expect("marker opened a document")
        } else {
            &mut self.loose
        }
    }

    fn flush(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let pending = std::mem::take(&mut self.pending);
        let mut labels: Vec<Label> = pending.iter().map(|p| p.token.label.clone()).collect();
        let repaired = repair_bio(&mut labels);
        if let Some(&first) = repaired.first() {
            if !self.cfg.repair_bio {
                return Err(Error::InvalidBio {
                    line: pending[first].line,
                    previous: if first == 0 { "sentence start".into() } else { pending[first - 1].token.label.to_string() },
                    label: pending[first].token.label.to_string(),
                });
            }
        }
        let tokens = pending
            .into_iter()
            .zip(labels)
            .map(|(p, label)| Token { label, ..p.token })
            .collect();
        let id = self.next_sentence_id;
        self.next_sentence_id += 1;
        self.current().push(Sentence::new(id, tokens));
        Ok(())
    }

    fn token(&mut self, cols: &[&str], line: usize) -> Result<Token> {
        let cfg = self.cfg;
        let expected = *self.expected_columns.get_or_insert(cols.len());
        if cols.len() != expected {
            return Err(Error::Parse {
                line,
                msg: format!("expected {expected} columns, found {}", cols.len()),
            });
        }
        let col = |idx: usize| {
            cols.get(idx).copied().ok_or_else(|| Error::Parse {
                line,
                msg: format!("missing column {idx}"),
            })
        };
        let optional = |idx: Option<usize>| -> Result<Option<&str>> {
            match idx {
                Some(i) => col(i).map(|v| (v != "_").then_some(v)),
                None => Ok(None),
            }
        };
        let parse_err = |e: Error| Error::Parse { line, msg: e.to_string() };

        let mut token = Token::new(col(cfg.text)?, optional(cfg.pos)?);
        if let Some(i) = cfg.label {
            token.label = col(i)?.parse().map_err(parse_err)?;
            token.source = cfg.label_source;
        }
        if let Some(src) = optional(cfg.source)? {
            token.source = src.parse().map_err(parse_err)?;
        }
        if let Some(conf) = optional(cfg.confidence)? {
            token.confidence = Some(conf.parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad confidence `{conf}`: {e}"),
            })?);
        }
        token.validate().map_err(parse_err)?;
        Ok(token)
    }

    fn finish(mut self) -> Result<Vec<Document>> {
        self.flush()?;
        let mut groups = Vec::new();
        if self.saw_marker {
            if !self.loose.is_empty() {
                groups.push(std::mem::take(&mut self.loose));
            }
            groups.extend(self.docs);
        } else {
            match self.cfg.discourse_fallback {
                DiscourseFallback::PerSentence => groups.extend(self.loose.into_iter().map(|s| vec![s])),
                DiscourseFallback::WholeCorpus if !self.loose.is_empty() => groups.push(self.loose),
                DiscourseFallback::WholeCorpus => {}
            }
        }
        Ok(groups
            .into_iter()
            .enumerate()
            .map(|(k, sentences)| Document::new(format!("doc-{k}"), sentences))
            .collect())
    }
}

pub fn read_corpus<R: BufRead>(input: R, cfg: &ColumnConfig) -> Result<Vec<Document>> {
    let mut reader = Reader {
        cfg,
        expected_columns: cfg.columns,
        next_sentence_id: 0,
        pending: Vec::new(),
        loose: Vec::new(),
        docs: Vec::new(),
        saw_marker: false,
    };
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            reader.flush()?;
            continue;
        }
        if cfg.doc_marker.as_deref() == Some(cols[0]) {
            reader.flush()?;
            reader.saw_marker = true;
            reader.docs.push(Vec::new());
            continue;
        }
        let token = reader.token(&cols, lineno)?;
        reader.pending.push(PendingToken { token, line: lineno });
    }
    reader.finish()
}

pub fn read_corpus_str(input: &str, cfg: &ColumnConfig) -> Result<Vec<Document>> {
    read_corpus(input.as_bytes(), cfg)
}

pub fn write_corpus<W: Write>(docs: &[Document], cfg: &ColumnConfig, out: &mut W) -> std::io::Result<()> {
    let width = cfg.width();
    for doc in docs {
        if let Some(marker) = &cfg.doc_marker {
            writeln!(out, "{marker}")?;
            writeln!(out)?;
        }
        for sentence in &doc.sentences {
            for token in &sentence.tokens {
                let mut cols = vec!["_".to_string(); width];
                cols[cfg.text] = token.text.clone();
                if let (Some(i), Some(pos)) = (cfg.pos, &token.pos) {
                    cols[i] = pos.clone();
                }
                if let Some(i) = cfg.label {
                    cols[i] = token.label.to_string();
                }
                if let Some(i) = cfg.source {
                    cols[i] = token.source.to_string();
                }
                if let (Some(i), Some(c)) = (cfg.confidence, token.confidence) {
                    cols[i] = c.to_string();
                }
                writeln!(out, "{}", cols.join(" "))?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_corpus_string(docs: &[Document], cfg: &ColumnConfig) -> String {
    let mut buf = Vec::new();
    write_corpus(docs, cfg, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("tokens are UTF-8")
}
