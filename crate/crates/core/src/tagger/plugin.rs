use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_classes, Capabilities, Predictor, Tagger, TaggerHyperparams, TaggerModel, TaggerPrediction};

use crate::corpus::{EntityClass, Label, LabelSource, Sentence, Token};
use crate::error::{Error, Result};
use crate::window_filter::TrainingSegment;
use crate::wire::{decode, serve, LineChannel, PROTOCOL_VERSION};

#[derive(Serialize)]
struct WireSegment<'a> {
    tokens: Vec<&'a str>,
    pos: Vec<Option<&'a str>>,
    labels: Vec<&'a Label>,
}

#[derive(Serialize)]
struct WireSentence<'a> {
    tokens: Vec<&'a str>,
    pos: Vec<Option<&'a str>>,
}

#[derive(Deserialize)]
struct TrainedModel {
    signature: String,
    blob: String,
}

fn hello(channel: &LineChannel) -> Result<Capabilities> {
    let resp = channel.call("hello", Value::Null)?;
    let protocol: u64 = decode(&resp, "protocol")?;
    if protocol != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!(
            "tagger plugin at {} speaks protocol {protocol}, expected {PROTOCOL_VERSION}",
            channel.endpoint()
        )));
    }
    let service: String = decode(&resp, "service")?;
    if service != "tagger" {
        return Err(Error::Protocol(format!("{} is a `{service}` service, not a tagger", channel.endpoint())));
    }
    Ok(Capabilities {
        protocol,
        name: resp.get("name").and_then(Value::as_str).unwrap_or("plugin").to_string(),
        classes: match resp.get("classes") {
            None | Some(Value::Null) => None,
            Some(_) => Some(decode(&resp, "classes")?),
        },
        calibrated: resp.get("calibrated").and_then(Value::as_bool).unwrap_or(false),
    })
}

/// Connects, performs the handshake and returns the plugin's capabilities.
pub fn plugin_handshake(endpoint: &str) -> Result<Capabilities> {
    hello(&LineChannel::connect(endpoint)?)
}

/// A tagger running in another process.
pub struct PluginTagger {
    channel: Arc<LineChannel>,
    caps: Capabilities,
}

impl PluginTagger {
    pub fn connect(endpoint: &str) -> Result<Self> {
        PluginTagger::new(LineChannel::connect(endpoint)?)
    }

    pub fn new(channel: LineChannel) -> Result<Self> {
        let caps = hello(&channel)?;
        Ok(PluginTagger { channel: Arc::new(channel), caps })
    }
}

impl Tagger for PluginTagger {
    fn capabilities(&self) -> Result<Capabilities> {
        Ok(self.caps.clone())
    }

    fn train(&self, segments: &[TrainingSegment], classes: &[EntityClass], hp: &TaggerHyperparams) -> Result<TaggerModel> {
        hp.validate()?;
        if segments.is_empty() {
            return Err(Error::Tagger("no training segments".into()));
        }
        if let Some(own) = &self.caps.classes {
            check_classes(own, classes)?;
        }
        let wire: Vec<WireSegment> = segments
            .iter()
            .map(|s| WireSegment {
                tokens: s.tokens.iter().map(|t| t.text.as_str()).collect(),
                pos: s.tokens.iter().map(|t| t.pos.as_deref()).collect(),
                labels: s.tokens.iter().map(|t| &t.label).collect(),
            })
            .collect();
        let resp = self.channel.call(
            "train",
            json!({ "classes": classes, "hyperparams": hp, "segments": wire }),
        )?;
        let trained: TrainedModel = decode(&resp, "model")?;
        Ok(TaggerModel { signature: trained.signature, classes: classes.to_vec(), blob: trained.blob })
    }

    fn load(&self, model: &TaggerModel) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(PluginPredictor { channel: Arc::clone(&self.channel), model: model.clone() }))
    }
}

struct PluginPredictor {
    channel: Arc<LineChannel>,
    model: TaggerModel,
}

impl Predictor for PluginPredictor {
    fn classes(&self) -> &[EntityClass] {
        &self.model.classes
    }

    fn predict_batch(&self, sentences: &[Sentence]) -> Result<Vec<TaggerPrediction>> {
        let wire: Vec<WireSentence> = sentences
            .iter()
            .map(|s| WireSentence {
                tokens: s.tokens.iter().map(|t| t.text.as_str()).collect(),
                pos: s.tokens.iter().map(|t| t.pos.as_deref()).collect(),
            })
            .collect();
        let resp = self.channel.call("predict", json!({ "model": self.model, "sentences": wire }))?;
        let out: Vec<TaggerPrediction> = decode(&resp, "predictions")?;
        if out.len() != sentences.len() {
            return Err(Error::Protocol(format!("{} predictions for {} sentences", out.len(), sentences.len())));
        }
        for (p, s) in out.iter().zip(sentences) {
            p.validate(s.len())?;
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct IncomingSegment {
    tokens: Vec<String>,
    pos: Vec<Option<String>>,
    labels: Vec<Label>,
}

#[derive(Deserialize)]
struct IncomingSentence {
    tokens: Vec<String>,
    pos: Vec<Option<String>>,
}

fn rebuild(id: usize, tokens: Vec<String>, pos: Vec<Option<String>>) -> Result<Sentence> {
    if tokens.len() != pos.len() {
        return Err(Error::Protocol(format!("{} tokens but {} POS tags", tokens.len(), pos.len())));
    }
    let tokens = tokens.into_iter().zip(pos).map(|(t, p)| Token::new(t, p.as_deref())).collect();
    Ok(Sentence::new(id, tokens))
}

/// Serves an in-process tagger over the plugin protocol until end of input.
pub fn serve_tagger<R: BufRead, W: Write>(tagger: &dyn Tagger, reader: R, writer: W) -> Result<()> {
    let caps = tagger.capabilities()?;
    serve(reader, writer, |op, req| match op {
        "hello" => Ok(json!({
            "protocol": PROTOCOL_VERSION,
            "service": "tagger",
            "name": caps.name,
            "classes": caps.classes,
            "calibrated": caps.calibrated,
        })),
        "train" => {
            let classes: Vec<EntityClass> = decode(req, "classes")?;
            let hp: TaggerHyperparams = decode(req, "hyperparams")?;
            let incoming: Vec<IncomingSegment> = decode(req, "segments")?;
            let mut segments = Vec::with_capacity(incoming.len());
            for (i, seg) in incoming.into_iter().enumerate() {
                if seg.labels.len() != seg.tokens.len() {
                    return Err(Error::Protocol(format!("segment {i}: {} labels for {} tokens", seg.labels.len(), seg.tokens.len())));
                }
                let mut sentence = rebuild(i, seg.tokens, seg.pos)?;
                for (t, l) in sentence.tokens.iter_mut().zip(seg.labels) {
                    t.label = l;
                    t.source = LabelSource::Gold;
                }
                segments.push(TrainingSegment::whole(&sentence));
            }
            let model = tagger.train(&segments, &classes, &hp)?;
            Ok(json!({ "model": { "signature": model.signature, "blob": model.blob } }))
        }
        "predict" => {
            let model: TaggerModel = decode(req, "model")?;
            let incoming: Vec<IncomingSentence> = decode(req, "sentences")?;
            let sentences = incoming
                .into_iter()
                .enumerate()
                .map(|(i, s)| rebuild(i, s.tokens, s.pos))
                .collect::<Result<Vec<_>>>()?;
            let predictions = tagger.load(&model)?.predict_batch(&sentences)?;
            Ok(json!({ "predictions": predictions }))
        }
        other => Err(Error::Protocol(format!("unknown operation `{other}`"))),
    })
}
