//! Averaged structured perceptron with first-order transitions and Viterbi
//! decoding restricted to valid BIO sequences.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::token_features;
use super::{Capabilities, Predictor, ScoredSpan, Tagger, TaggerHyperparams, TaggerModel, TaggerPrediction};
use crate::corpus::{chunks_from_labels, repair_bio, EntityClass, Label, Sentence, Token};
use crate::error::{Error, Result};
use crate::window_filter::TrainingSegment;
use crate::wire::PROTOCOL_VERSION;

pub const NATIVE_SIGNATURE: &str = "native-perceptron/1";

/// O, then B-/I- for each class in order.
#[derive(Debug, Clone)]
struct LabelSpace {
    classes: Vec<EntityClass>,
}

impl LabelSpace {
    fn len(&self) -> usize {
        1 + 2 * self.classes.len()
    }

    fn index(&self, label: &Label) -> Option<usize> {
        match label {
            Label::O => Some(0),
            Label::B(c) => self.classes.iter().position(|x| x == c).map(|k| 1 + 2 * k),
            Label::I(c) => self.classes.iter().position(|x| x == c).map(|k| 2 + 2 * k),
        }
    }

    fn label(&self, idx: usize) -> Label {
        if idx == 0 {
            return Label::O;
        }
        let class = self.classes[(idx - 1) / 2].clone();
        if idx % 2 == 1 {
            Label::B(class)
        } else {
            Label::I(class)
        }
    }

    /// Whether `cur` may follow `prev` (`None` = sentence start).
    fn allowed(&self, prev: Option<usize>, cur: usize) -> bool {
        if cur == 0 || cur % 2 == 1 {
            return true;
        }
        matches!(prev, Some(p) if p != 0 && (p - 1) / 2 == (cur - 1) / 2)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Weights {
    classes: Vec<EntityClass>,
    features: Vec<String>,
    /// `features.len() * labels`, row-major by feature.
    emission: Vec<f64>,
    /// `(labels + 1) * labels`; the last row scores the sentence start.
    transition: Vec<f64>,
    /// Margin normalizer for confidences.
    scale: f64,
}

struct Lattice {
    n_labels: usize,
    emission: Vec<f64>,
}

struct Decoded {
    path: Vec<usize>,
    best: f64,
    max_marginal: Vec<f64>,
}

struct Scorer<'a> {
    space: &'a LabelSpace,
    emission: &'a [f64],
    transition: &'a [f64],
}

impl Scorer<'_> {
    fn lattice(&self, feats: &[Vec<usize>]) -> Lattice {
        let n_labels = self.space.len();
        let mut emission = vec![0.0; feats.len() * n_labels];
        for (i, fs) in feats.iter().enumerate() {
            let row = &mut emission[i * n_labels..(i + 1) * n_labels];
            for &f in fs {
                for (y, w) in self.emission[f * n_labels..(f + 1) * n_labels].iter().enumerate() {
                    row[y] += w;
                }
            }
        }
        Lattice { n_labels, emission }
    }

    fn trans(&self, prev: Option<usize>, cur: usize) -> f64 {
        let n = self.space.len();
        if !self.space.allowed(prev, cur) {
            return f64::NEG_INFINITY;
        }
        self.transition[prev.unwrap_or(n) * n + cur]
    }

    /// Viterbi path plus max-marginals `alpha + beta` for every cell.
    fn decode(&self, feats: &[Vec<usize>]) -> Decoded {
        let lat = self.lattice(feats);
        let (len, n) = (feats.len(), lat.n_labels);
        let e = |i: usize, y: usize| lat.emission[i * n + y];
        let mut alpha = vec![f64::NEG_INFINITY; len * n];
        let mut back = vec![0usize; len * n];
        for y in 0..n {
            alpha[y] = e(0, y) + self.trans(None, y);
        }
        for i in 1..len {
            for y in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for p in 0..n {
                    let s = alpha[(i - 1) * n + p] + self.trans(Some(p), y);
                    if s > best {
                        best = s;
                        arg = p;
                    }
                }
                alpha[i * n + y] = best + e(i, y);
                back[i * n + y] = arg;
            }
        }
        let mut beta = vec![0.0; len * n];
        for i in (0..len.saturating_sub(1)).rev() {
            for y in 0..n {
                let mut best = f64::NEG_INFINITY;
                for nx in 0..n {
                    let s = self.trans(Some(y), nx) + e(i + 1, nx) + beta[(i + 1) * n + nx];
                    if s > best {
                        best = s;
                    }
                }
                beta[i * n + y] = best;
            }
        }
        let mut last = 0;
        for y in 1..n {
            if alpha[(len - 1) * n + y] > alpha[(len - 1) * n + last] {
                last = y;
            }
        }
        let best = alpha[(len - 1) * n + last];
        let mut path = vec![last; len];
        for i in (1..len).rev() {
            path[i - 1] = back[i * n + path[i]];
        }
        let max_marginal = alpha.iter().zip(&beta).map(|(a, b)| a + b).collect();
        Decoded { path, best, max_marginal }
    }
}

fn token_margins(d: &Decoded, n: usize) -> impl Iterator<Item = f64> + '_ {
    d.path.iter().enumerate().map(move |(i, &y)| {
        let rival = (0..n)
            .filter(|&z| z != y)
            .map(|z| d.max_marginal[i * n + z])
            .fold(f64::NEG_INFINITY, f64::max);
        d.best - rival
    })
}

/// Score lost by the best path that labels the span differently: any other
/// label inside it, or an `I-` extension right after it.
fn span_margin(d: &Decoded, space: &LabelSpace, start: usize, end: usize) -> f64 {
    let n = space.len();
    let mut rival = f64::NEG_INFINITY;
    for i in start..end {
        for z in (0..n).filter(|&z| z != d.path[i]) {
            rival = rival.max(d.max_marginal[i * n + z]);
        }
    }
    // decoded spans start with B-k (odd index); I-k follows it
    if end < d.path.len() && d.path[start] % 2 == 1 {
        rival = rival.max(d.max_marginal[end * n + d.path[start] + 1]);
    }
    if rival == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (d.best - rival).max(0.0)
    }
}

fn confidence(margin: f64, scale: f64) -> f64 {
    (margin / (2.0 * scale)).tanh().clamp(0.0, 1.0)
}

struct Instance {
    feats: Vec<Vec<usize>>,
    gold: Vec<usize>,
}

/// Lazily averaged weight vector.
struct Averaged {
    w: Vec<f64>,
    u: Vec<f64>,
}

impl Averaged {
    fn new(len: usize) -> Self {
        Averaged { w: vec![0.0; len], u: vec![0.0; len] }
    }

    fn add(&mut self, idx: usize, delta: f64, step: f64) {
        self.w[idx] += delta;
        self.u[idx] += step * delta;
    }

    fn finish(self, step: f64) -> Vec<f64> {
        self.w.iter().zip(&self.u).map(|(w, u)| w - u / step).collect()
    }
}

fn train_weights(segments: &[TrainingSegment], classes: &[EntityClass], hp: &TaggerHyperparams) -> Result<Weights> {
    let space = LabelSpace { classes: classes.to_vec() };
    let n = space.len();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut features: Vec<String> = Vec::new();
    let mut data = Vec::with_capacity(segments.len());
    for seg in segments.iter().filter(|s| !s.is_empty()) {
        let mut labels = seg.labels();
        repair_bio(&mut labels);
        let gold = labels
            .iter()
            .map(|l| space.index(l).ok_or_else(|| Error::Tagger(format!("label {l} outside the class set"))))
            .collect::<Result<Vec<_>>>()?;
        let feats = (0..seg.tokens.len())
            .map(|i| {
                token_features(&seg.tokens, i)
                    .into_iter()
                    .map(|f| {
                        let next = features.len();
                        *index.entry(f.clone()).or_insert_with(|| {
                            features.push(f);
                            next
                        })
                    })
                    .collect()
            })
            .collect();
        data.push(Instance { feats, gold });
    }
    if data.is_empty() {
        return Err(Error::Tagger("no training segments".into()));
    }

    let mut em = Averaged::new(features.len() * n);
    let mut tr = Averaged::new((n + 1) * n);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut step = 1.0;
    for _ in 0..hp.epochs {
        order.shuffle(&mut rng);
        for &k in &order {
            let inst = &data[k];
            let scorer = Scorer { space: &space, emission: &em.w, transition: &tr.w };
            let pred = scorer.decode(&inst.feats).path;
            if pred != inst.gold {
                for i in 0..inst.gold.len() {
                    let (g, p) = (inst.gold[i], pred[i]);
                    if g != p {
                        for &f in &inst.feats[i] {
                            em.add(f * n + g, 1.0, step);
                            em.add(f * n + p, -1.0, step);
                        }
                    }
                    let gp = if i == 0 { n } else { inst.gold[i - 1] };
                    let pp = if i == 0 { n } else { pred[i - 1] };
                    if (gp, g) != (pp, p) {
                        tr.add(gp * n + g, 1.0, step);
                        tr.add(pp * n + p, -1.0, step);
                    }
                }
            }
            step += 1.0;
        }
    }
    let emission = em.finish(step);
    let transition = tr.finish(step);

    let scorer = Scorer { space: &space, emission: &emission, transition: &transition };
    let mut margins: Vec<f64> = data
        .iter()
        .flat_map(|inst| token_margins(&scorer.decode(&inst.feats), n).collect::<Vec<_>>())
        .filter(|m| m.is_finite() && *m > 0.0)
        .collect();
    margins.sort_by(f64::total_cmp);
    let scale = margins.get(margins.len() / 2).map_or(1.0, |m| m / 4.0);

    Ok(Weights { classes: classes.to_vec(), features, emission, transition, scale })
}

pub struct NativePredictor {
    weights: Weights,
    space: LabelSpace,
    index: HashMap<String, usize>,
}

impl NativePredictor {
    fn new(weights: Weights) -> Self {
        let index = weights.features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        let space = LabelSpace { classes: weights.classes.clone() };
        NativePredictor { weights, space, index }
    }

    fn predict_tokens(&self, tokens: &[Token]) -> TaggerPrediction {
        if tokens.is_empty() {
            return TaggerPrediction { labels: Vec::new(), spans: Vec::new() };
        }
        let feats: Vec<Vec<usize>> = (0..tokens.len())
            .map(|i| token_features(tokens, i).iter().filter_map(|f| self.index.get(f).copied()).collect())
            .collect();
        let scorer = Scorer {
            space: &self.space,
            emission: &self.weights.emission,
            transition: &self.weights.transition,
        };
        let decoded = scorer.decode(&feats);
        let labels: Vec<Label> = decoded.path.iter().map(|&y| self.space.label(y)).collect();
        let spans = chunks_from_labels(&labels)
            .into_iter()
            .map(|c| {
                let margin = span_margin(&decoded, &self.space, c.start, c.end);
                ScoredSpan {
                    start: c.start,
                    end: c.end,
                    class: c.class,
                    confidence: confidence(margin, self.weights.scale),
                }
            })
            .collect();
        TaggerPrediction { labels, spans }
    }
}

impl Predictor for NativePredictor {
    fn classes(&self) -> &[EntityClass] {
        &self.weights.classes
    }

    fn predict_batch(&self, sentences: &[Sentence]) -> Result<Vec<TaggerPrediction>> {
        Ok(sentences.iter().map(|s| self.predict_tokens(&s.tokens)).collect())
    }
}

/// The in-process tagger.
#[derive(Debug, Clone, Copy, Default)]
pub struct NativeTagger;

impl Tagger for NativeTagger {
    fn capabilities(&self) -> Result<Capabilities> {
        Ok(Capabilities {
            protocol: PROTOCOL_VERSION,
            name: "native-perceptron".into(),
            classes: None,
            calibrated: false,
        })
    }

    fn train(&self, segments: &[TrainingSegment], classes: &[EntityClass], hp: &TaggerHyperparams) -> Result<TaggerModel> {
        hp.validate()?;
        let weights = train_weights(segments, classes, hp)?;
        Ok(TaggerModel {
            signature: NATIVE_SIGNATURE.into(),
            classes: classes.to_vec(),
            blob: serde_json::to_string(&weights)?,
        })
    }

    fn load(&self, model: &TaggerModel) -> Result<Box<dyn Predictor>> {
        if model.signature != NATIVE_SIGNATURE {
            return Err(Error::Tagger(format!("model signature `{}` is not {NATIVE_SIGNATURE}", model.signature)));
        }
        let weights: Weights = serde_json::from_str(&model.blob)?;
        if weights.classes != model.classes {
            return Err(Error::Tagger("model metadata and weights disagree on the class set".into()));
        }
        Ok(Box::new(NativePredictor::new(weights)))
    }
}
