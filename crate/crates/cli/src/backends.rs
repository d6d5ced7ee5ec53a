use std::path::Path;

use anyhow::{Context, Result};
use lexner::mlm::{MlmBackend, StubBackend, WireMlmBackend};
use lexner::tagger::{NativeTagger, PluginTagger, Tagger};

use crate::manifest::require_file;

/// `stub:<file>` loads an in-process stub; anything else is a wire endpoint.
pub fn mlm_backend(endpoint: &str) -> Result<Box<dyn MlmBackend>> {
    if let Some(file) = endpoint.strip_prefix("stub:") {
        require_file(Path::new(file), "stub backend file")?;
        let stub = StubBackend::load(Path::new(file)).with_context(|| format!("loading stub backend {file}"))?;
        return Ok(Box::new(stub));
    }
    let backend = WireMlmBackend::connect(endpoint).with_context(|| format!("masked-LM backend {endpoint}"))?;
    Ok(Box::new(backend))
}

pub fn tagger(endpoint: Option<&str>) -> Result<Box<dyn Tagger>> {
    match endpoint {
        None | Some("native") => Ok(Box::new(NativeTagger)),
        Some(ep) => Ok(Box::new(PluginTagger::connect(ep).with_context(|| format!("tagger plugin {ep}"))?)),
    }
}
