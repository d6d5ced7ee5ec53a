use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use lexner::corpus::{read_corpus, write_corpus, ColumnConfig, Document};
use lexner::selftrain::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::{usage, Global};

/// Column layouts understood by the reader and writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// `word POS chunk NER`, labels read as gold.
    Conll2003,
    /// `word POS label source confidence`.
    Provenance,
    /// `word POS ...` with any label column ignored.
    Unlabeled,
}

impl CorpusFormat {
    pub fn columns(self) -> ColumnConfig {
        match self {
            CorpusFormat::Conll2003 => ColumnConfig::conll2003(),
            CorpusFormat::Provenance => ColumnConfig::provenance(),
            CorpusFormat::Unlabeled => ColumnConfig::unlabeled(),
        }
    }
}

/// Inputs a config file may name instead of passing them as flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub mlm_endpoint: Option<String>,
    pub tagger_endpoint: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub inputs: Inputs,
    pub pipeline: PipelineConfig,
}

impl ConfigFile {
    /// Reads the file; relative input paths are taken relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ConfigFile =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.inputs.corpus);
        rebase(&mut cfg.inputs.lexicon);
        rebase(&mut cfg.inputs.dev);
        rebase(&mut cfg.inputs.out);
        if let Some(ep) = cfg.inputs.mlm_endpoint.as_mut() {
            if let Some(file) = ep.strip_prefix("stub:") {
                if Path::new(file).is_relative() {
                    *ep = format!("stub:{}", base.join(file).display());
                }
            }
        }
        Ok(cfg)
    }

    /// The config file named by `--config`, or defaults.
    pub fn from_global(global: &Global) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(seed) = global.seed {
            cfg.pipeline.seed = seed;
        }
        cfg.pipeline.validate().map_err(|e| usage(format!("invalid pipeline configuration: {e}")))?;
        Ok(cfg)
    }
}

/// Everything a run depends on, resolved from flags, environment and the
/// config file. A copy is written next to the run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub dev: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub mlm_endpoint: Option<String>,
    pub tagger_endpoint: String,
    pub pipeline: PipelineConfig,
}

/// First of flag and config value, which must name an existing file.
pub fn existing(flag: Option<PathBuf>, configured: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let path = flag.or(configured).ok_or_else(|| usage(format!("no {what} given")))?;
    require_file(&path, what)?;
    Ok(path)
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

pub fn read_docs(path: &Path, format: CorpusFormat) -> Result<Vec<Document>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_corpus(BufReader::new(file), &format.columns()).with_context(|| format!("reading {}", path.display()))
}

pub fn write_docs(path: Option<&Path>, docs: &[Document], format: CorpusFormat) -> Result<()> {
    let cfg = format.columns();
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            write_corpus(docs, &cfg, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_corpus(docs, &cfg, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
