use std::io::{BufRead, Write};

use serde_json::{json, Value};

use super::{ClozeRequest, MlmBackend, SubwordCounter};
use crate::error::{Error, Result};
use crate::wire::{decode, field, serve, LineChannel, PROTOCOL_VERSION};

/// Masked-LM backend reached over the line protocol.
pub struct WireMlmBackend {
    channel: LineChannel,
}

impl WireMlmBackend {
    pub fn connect(endpoint: &str) -> Result<Self> {
        WireMlmBackend::new(LineChannel::connect(endpoint)?)
    }

    /// Wraps an open channel and performs the `hello` handshake.
    pub fn new(channel: LineChannel) -> Result<Self> {
        let hello = channel.call("hello", Value::Null)?;
        let protocol = field(&hello, "protocol")?.as_u64();
        if protocol != Some(PROTOCOL_VERSION) {
            return Err(Error::Protocol(format!(
                "masked-LM backend speaks protocol {protocol:?}, expected {PROTOCOL_VERSION}"
            )));
        }
        match hello.get("service").and_then(Value::as_str) {
            Some("mlm") => Ok(WireMlmBackend { channel }),
            other => Err(Error::Protocol(format!("endpoint is not a masked-LM service ({other:?})"))),
        }
    }
}

impl SubwordCounter for WireMlmBackend {
    fn subword_counts(&self, words: &[String]) -> Result<Vec<usize>> {
        let resp = self.channel.call("subwords", json!({ "words": words }))?;
        let counts: Vec<usize> = decode(&resp, "counts")?;
        if counts.len() != words.len() {
            return Err(Error::Protocol(format!("{} counts for {} words", counts.len(), words.len())));
        }
        Ok(counts)
    }
}

impl MlmBackend for WireMlmBackend {
    fn fill(&self, requests: &[ClozeRequest]) -> Result<Vec<Vec<Option<Vec<f64>>>>> {
        let resp = self.channel.call("fill", json!({ "items": requests }))?;
        decode(&resp, "results")
    }
}

/// Exposes any backend over the line protocol until `reader` closes.
pub fn serve_mlm<R: BufRead, W: Write>(backend: &dyn MlmBackend, reader: R, writer: W) -> Result<()> {
    serve(reader, writer, |op, req| match op {
        "hello" => Ok(json!({ "protocol": PROTOCOL_VERSION, "service": "mlm" })),
        "subwords" => {
            let words: Vec<String> = decode(req, "words")?;
            Ok(json!({ "counts": backend.subword_counts(&words)? }))
        }
        "fill" => {
            let items: Vec<ClozeRequest> = decode(req, "items")?;
            for item in &items {
                item.validate()?;
            }
            Ok(json!({ "results": backend.fill(&items)? }))
        }
        other => Err(Error::Protocol(format!("unknown operation `{other}`"))),
    })
}
