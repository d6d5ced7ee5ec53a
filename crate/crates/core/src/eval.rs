//! Exact-match entity scoring in the style of conlleval, supervision
//! accounting, label mapping and length alignment of external tag output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{chunks_from_labels, Chunk, Document, EntityClass, Label, LabelSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: Counts,
}

impl From<Counts> for Metrics {
    fn from(c: Counts) -> Self {
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = pct(c.correct, c.predicted);
        let recall = pct(c.correct, c.gold);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Metrics { precision, recall, f1, counts: c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub overall: Metrics,
    pub per_class: BTreeMap<EntityClass, Metrics>,
    pub tokens: usize,
}

impl ScoreReport {
    /// One JSON record per class, then the overall record.
    pub fn to_json_lines(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            class: &'a str,
            #[serde(flatten)]
            metrics: &'a Metrics,
        }
        let mut out = String::new();
        for (class, m) in &self.per_class {
            out.push_str(&serde_json::to_string(&Row { class: class.as_str(), metrics: m }).expect("serializable"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&Row { class: "overall", metrics: &self.overall }).expect("serializable"));
        out.push('\n');
        out
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.overall.counts;
        writeln!(
            f,
            "processed {} tokens with {} phrases; found: {} phrases; correct: {}.",
            self.tokens, o.gold, o.predicted, o.correct
        )?;
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>7} {:>7} {:>7}", "class", "precision", "recall", "f1", "gold", "pred", "correct")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: &Metrics| {
            writeln!(
                f,
                "{:<10} {:>9.2} {:>9.2} {:>9.2} {:>7} {:>7} {:>7}",
                name, m.precision, m.recall, m.f1, m.counts.gold, m.counts.predicted, m.counts.correct
            )
        };
        for (class, m) in &self.per_class {
            row(f, class.as_str(), m)?;
        }
        row(f, "overall", &self.overall)
    }
}

fn check_aligned(pred: &[Document], gold: &[Document]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Misaligned(format!("{} predicted vs {} gold documents", pred.len(), gold.len())));
    }
    for (d, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.sentences.len() != g.sentences.len() {
            return Err(Error::Misaligned(format!(
                "document {d}: {} predicted vs {} gold sentences",
                p.sentences.len(),
                g.sentences.len()
            )));
        }
        for (s, (ps, gs)) in p.sentences.iter().zip(&g.sentences).enumerate() {
            if ps.len() != gs.len() {
                return Err(Error::Misaligned(format!(
                    "document {d}, sentence {s}: {} predicted vs {} gold tokens",
                    ps.len(),
                    gs.len()
                )));
            }
        }
    }
    Ok(())
}

/// A predicted entity counts as correct iff a gold entity has the same
/// class, start and end. Overall figures are micro-averaged.
pub fn score_entities(pred: &[Document], gold: &[Document]) -> Result<ScoreReport> {
    check_aligned(pred, gold)?;
    let mut per: BTreeMap<EntityClass, Counts> = BTreeMap::new();
    let mut tokens = 0;
    for (p, g) in pred.iter().zip(gold) {
        for (ps, gs) in p.sentences.iter().zip(&g.sentences) {
            tokens += gs.len();
            let pc = chunks_from_labels(&ps.labels());
            let gc = chunks_from_labels(&gs.labels());
            let gold_set: BTreeSet<&Chunk> = gc.iter().collect();
            for c in &gc {
                per.entry(c.class.clone()).or_default().gold += 1;
            }
            for c in &pc {
                let e = per.entry(c.class.clone()).or_default();
                e.predicted += 1;
                if gold_set.contains(c) {
                    e.correct += 1;
                }
            }
        }
    }
    let total = per.values().fold(Counts::default(), |a, c| Counts {
        gold: a.gold + c.gold,
        predicted: a.predicted + c.predicted,
        correct: a.correct + c.correct,
    });
    Ok(ScoreReport {
        overall: total.into(),
        per_class: per.into_iter().map(|(k, c)| (k, c.into())).collect(),
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionDegree {
    /// Weakly annotated entities as a percentage of gold entities.
    pub percentage: f64,
    pub annotated_entities: usize,
    pub gold_entities: usize,
    /// Weak entities whose boundaries and class match a gold entity.
    pub correct_entities: usize,
    pub labeled_tokens: usize,
}

/// Compares a weakly annotated copy of a corpus against its gold labels.
pub fn supervision_degree(annotated: &[Document], gold: &[Document]) -> Result<SupervisionDegree> {
    check_aligned(annotated, gold)?;
    let (mut annotated_entities, mut gold_entities, mut correct, mut labeled_tokens) = (0, 0, 0, 0);
    for (a, g) in annotated.iter().zip(gold) {
        for (s, gs) in a.sentences.iter().zip(&g.sentences) {
            let ac = chunks_from_labels(&s.labels());
            let gc: BTreeSet<Chunk> = chunks_from_labels(&gs.labels()).into_iter().collect();
            annotated_entities += ac.len();
            gold_entities += gc.len();
            correct += ac.iter().filter(|c| gc.contains(c)).count();
            labeled_tokens += s.tokens.iter().filter(|t| !t.label.is_outside()).count();
        }
    }
    let percentage = if gold_entities == 0 { 0.0 } else { 100.0 * annotated_entities as f64 / gold_entities as f64 };
    Ok(SupervisionDegree { percentage, annotated_entities, gold_entities, correct_entities: correct, labeled_tokens })
}

/// Copy with every label reset to `O`.
pub fn strip_labels(docs: &[Document]) -> Vec<Document> {
    let mut out = docs.to_vec();
    for token in out.iter_mut().flat_map(|d| d.sentences.iter_mut()).flat_map(|s| s.tokens.iter_mut()) {
        token.label = Label::O;
        token.source = LabelSource::OutsideDefault;
        token.confidence = None;
    }
    out
}

/// Source class name to target class; the target `O` drops the entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMapping(pub BTreeMap<String, String>);

impl LabelMapping {
    pub fn wnut_to_conll() -> Self {
        LabelMapping(
            [
                ("person", "PER"),
                ("location", "LOC"),
                ("corporation", "ORG"),
                ("group", "ORG"),
                ("product", "MISC"),
                ("creative-work", "MISC"),
            ]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
        )
    }

    pub fn identity(classes: &[EntityClass]) -> Self {
        LabelMapping(classes.iter().map(|c| (c.to_string(), c.to_string())).collect())
    }

    /// Reads a TOML table of `source = "TARGET"` pairs.
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn map_labels(docs: &[Document], mapping: &LabelMapping) -> Result<Vec<Document>> {
    let mut out = docs.to_vec();
    for sentence in out.iter_mut().flat_map(|d| d.sentences.iter_mut()) {
        for span in sentence.spans() {
            let target = mapping
                .0
                .get(span.class.as_str())
                .ok_or_else(|| Error::UnmappedLabel(span.class.to_string()))?;
            if target == "O" {
                sentence.clear_span(span.start, span.end, LabelSource::OutsideDefault);
            } else {
                for (i, token) in sentence.tokens[span.start..span.end].iter_mut().enumerate() {
                    let class = EntityClass::from(target.as_str());
                    token.label = if i == 0 { Label::B(class) } else { Label::I(class) };
                }
            }
        }
    }
    Ok(out)
}

/// Pads with `O` or truncates on the right to exactly `n` tags.
pub fn align_length(tags: &[Label], n: usize) -> Vec<Label> {
    let mut out: Vec<Label> = tags.iter().take(n).cloned().collect();
    out.resize(n, Label::O);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn doc(labels: &[&[&str]]) -> Document {
        Document::new(
            "d",
            labels
                .iter()
                .enumerate()
                .map(|(i, ls)| {
                    let mut s = Sentence::from_words(i, &vec!["w"; ls.len()], &vec!["NN"; ls.len()]);
                    for (t, l) in s.tokens.iter_mut().zip(ls.iter()) {
                        t.label = l.parse().unwrap();
                    }
                    s
                })
                .collect(),
        )
    }

    #[test]
    fn identical_is_perfect() {
        let g = doc(&[&["B-PER", "I-PER", "O", "B-LOC"]]);
        let r = score_entities(&[g.clone()], &[g]).unwrap();
        assert_eq!((r.overall.precision, r.overall.recall, r.overall.f1), (100.0, 100.0, 100.0));
    }

    #[test]
    fn wrong_class_is_fp_and_fn() {
        let g = doc(&[&["B-PER", "O"]]);
        let p = doc(&[&["B-ORG", "O"]]);
        let r = score_entities(&[p], &[g]).unwrap();
        assert_eq!(r.overall.counts, Counts { gold: 1, predicted: 1, correct: 0 });
        assert_eq!(r.per_class[&EntityClass::from("PER")].counts.gold, 1);
        assert_eq!(r.per_class[&EntityClass::from("ORG")].counts.predicted, 1);
        assert_eq!(r.overall.f1, 0.0);
    }

    #[test]
    fn misalignment_names_position() {
        let err = score_entities(&[doc(&[&["O"]])], &[doc(&[&["O", "O"]])]).unwrap_err();
        assert!(err.to_string().contains("sentence 0"), "{err}");
    }

    #[test]
    fn supervision_percentage() {
        let row: &[&str] = &["B-PER"; 10];
        let gold = doc(&[row; 10]);
        let mut weak = strip_labels(std::slice::from_ref(&gold));
        for s in weak[0].sentences.iter_mut().take(1) {
            s.set_span(0, 1, &"PER".into(), LabelSource::Lexicon, None);
        }
        let d = supervision_degree(&weak, &[gold]).unwrap();
        assert_eq!(d.gold_entities, 100);
        assert_eq!(d.annotated_entities, 1);
        assert_eq!(d.percentage, 1.0);
        assert_eq!(d.labeled_tokens, 1);
    }

    #[test]
    fn wnut_mapping() {
        let d = doc(&[&["B-group", "I-group", "B-creative-work", "O"]]);
        let out = map_labels(&[d.clone()], &LabelMapping::wnut_to_conll()).unwrap();
        let ls: Vec<String> = out[0].sentences[0].labels().iter().map(Label::to_string).collect();
        assert_eq!(ls, ["B-ORG", "I-ORG", "B-MISC", "O"]);
        let bad = doc(&[&["B-alien"]]);
        assert!(matches!(map_labels(&[bad], &LabelMapping::wnut_to_conll()), Err(Error::UnmappedLabel(_))));
        let ident = LabelMapping::identity(&["group".into(), "creative-work".into()]);
        assert_eq!(map_labels(&[d.clone()], &ident).unwrap(), vec![d]);
    }

    #[test]
    fn alignment() {
        let tags: Vec<Label> = ["B-PER", "I-PER", "O"].iter().map(|s| s.parse().unwrap()).collect();
        let padded = align_length(&tags, 5);
        assert_eq!(padded.len(), 5);
        assert_eq!(&padded[3..], &[Label::O, Label::O]);
        assert_eq!(align_length(&tags, 2), tags[..2].to_vec());
        assert_eq!(align_length(&tags, 3), tags);
    }

    #[test]
    fn report_renders() {
        let g = doc(&[&["B-PER"]]);
        let r = score_entities(&[g.clone()], &[g]).unwrap();
        assert!(r.to_string().contains("overall"));
        assert_eq!(r.to_json_lines().lines().count(), 2);
    }
}
