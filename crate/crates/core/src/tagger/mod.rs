//! Trainable sequence taggers: the contract, the native perceptron and the
//! wire-protocol plugin client.

mod features;
mod perceptron;
mod plugin;

pub use features::{shape, token_features};
pub use perceptron::{NativePredictor, NativeTagger, NATIVE_SIGNATURE};
pub use plugin::{plugin_handshake, serve_tagger, PluginTagger};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{chunks_from_labels, EntityClass, Label, Sentence};
use crate::error::{Error, Result};
use crate::window_filter::TrainingSegment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Noise level of the generalized cross-entropy loss (plugin only).
    pub noise_q: f64,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for TaggerHyperparams {
    fn default() -> Self {
        TaggerHyperparams {
            learning_rate: 1e-5,
            batch_size: 16,
            epochs: 8,
            noise_q: 0.9,
            label_smoothing: 0.1,
            seed: 0,
        }
    }
}

impl TaggerHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("tagger {what}")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.noise_q > 0.0 && self.noise_q <= 1.0) {
            return bad("noise_q must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub start: usize,
    pub end: usize,
    pub class: EntityClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerPrediction {
    pub labels: Vec<Label>,
    /// One entry per entity in `labels`, in order.
    pub spans: Vec<ScoredSpan>,
}

impl TaggerPrediction {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.labels.len() != len {
            return Err(Error::Tagger(format!("{} labels for {len} tokens", self.labels.len())));
        }
        let mut previous = None;
        for label in &self.labels {
            if !label.may_follow(previous) {
                return Err(Error::Tagger(format!("prediction is not BIO-valid at {label}")));
            }
            previous = Some(label);
        }
        let chunks = chunks_from_labels(&self.labels);
        let consistent = chunks.len() == self.spans.len()
            && chunks
                .iter()
                .zip(&self.spans)
                .all(|(c, s)| c.start == s.start && c.end == s.end && c.class == s.class);
        if !consistent {
            return Err(Error::Tagger("span confidences do not match the predicted labels".into()));
        }
        if let Some(s) = self.spans.iter().find(|s| !(0.0..=1.0).contains(&s.confidence)) {
            return Err(Error::Tagger(format!("span confidence {} outside [0, 1]", s.confidence)));
        }
        Ok(())
    }

    /// Confidence of the span `[start, end)`, if the prediction has exactly it.
    pub fn confidence_of(&self, start: usize, end: usize) -> Option<f64> {
        self.spans.iter().find(|s| s.start == start && s.end == end).map(|s| s.confidence)
    }
}

/// A trained model: tagger signature, class set and an opaque payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerModel {
    pub signature: String,
    pub classes: Vec<EntityClass>,
    pub blob: String,
}

impl TaggerModel {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub protocol: u64,
    pub name: String,
    /// Classes the tagger is restricted to, if any.
    #[serde(default)]
    pub classes: Option<Vec<EntityClass>>,
    pub calibrated: bool,
}

pub trait Predictor: Send + Sync {
    fn classes(&self) -> &[EntityClass];
    fn predict_batch(&self, sentences: &[Sentence]) -> Result<Vec<TaggerPrediction>>;
}

pub trait Tagger: Send + Sync {
    fn capabilities(&self) -> Result<Capabilities>;
    fn train(&self, segments: &[TrainingSegment], classes: &[EntityClass], hp: &TaggerHyperparams) -> Result<TaggerModel>;
    fn load(&self, model: &TaggerModel) -> Result<Box<dyn Predictor>>;
}

pub fn check_classes(model: &[EntityClass], expected: &[EntityClass]) -> Result<()> {
    let mut a = model.to_vec();
    let mut b = expected.to_vec();
    a.sort();
    b.sort();
    if a != b {
        return Err(Error::ClassMismatch {
            model: model.iter().map(|c| c.to_string()).collect(),
            expected: expected.iter().map(|c| c.to_string()).collect(),
        });
    }
    Ok(())
}

/// Predicts a batch after checking the class set against the pipeline's.
pub fn predict(predictor: &dyn Predictor, sentences: &[Sentence], expected: &[EntityClass]) -> Result<Vec<TaggerPrediction>> {
    check_classes(predictor.classes(), expected)?;
    let out = predictor.predict_batch(sentences)?;
    if out.len() != sentences.len() {
        return Err(Error::Tagger(format!("{} predictions for {} sentences", out.len(), sentences.len())));
    }
    for (p, s) in out.iter().zip(sentences) {
        p.validate(s.len())?;
    }
    Ok(out)
}
