use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use lexner::corpus::{EntityClass, LabelSource, Sentence};
use lexner::eval::{map_labels, score_entities, LabelMapping};
use lexner::lexicon::{annotate_with_lexicon, filter_for_mlm, validate_unambiguous, Lexicon};
use lexner::mlm::{MlmAnnotator, StubConfig};
use lexner::selftrain::{run_pipeline, Components, TraceRecord};
use lexner::synthetic::{generate, SyntheticConfig};
use lexner::tagger::{predict as tag, TaggerModel};

use crate::backends::{mlm_backend, tagger};
use crate::manifest::{existing, read_docs, write_docs, write_text, ConfigFile, CorpusFormat, RunManifest};
use crate::{usage, Global};

fn load_lexicon(path: &Path, classes: &[EntityClass]) -> Result<Lexicon> {
    let lexicon = Lexicon::load(path).map_err(|e| usage(format!("lexicon {}: {e}", path.display())))?;
    let violations = validate_unambiguous(&lexicon);
    if !violations.is_empty() {
        let list: Vec<String> = violations
            .iter()
            .map(|v| format!("`{}` ({})", v.surface, v.classes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("/")))
            .collect();
        return Err(usage(format!("lexicon {} lists surfaces under several classes: {}", path.display(), list.join(", "))));
    }
    lexicon.require_classes(classes).map_err(|e| usage(format!("lexicon {}: {e}", path.display())))?;
    Ok(lexicon)
}

fn mlm_endpoint(global: &Global, cfg: &ConfigFile) -> Option<String> {
    global.mlm_endpoint.clone().or_else(|| cfg.inputs.mlm_endpoint.clone())
}

/// Fails early on a missing stub file; wire endpoints are only checked on use.
fn check_endpoint(endpoint: &str) -> Result<()> {
    match endpoint.strip_prefix("stub:") {
        Some(file) => crate::manifest::require_file(Path::new(file), "stub backend file"),
        None => Ok(()),
    }
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unlabeled")]
    pub format: CorpusFormat,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Also label sentences without a lexicon match using the masked LM.
    #[arg(long)]
    pub mlm: bool,
}

pub fn annotate(global: &Global, args: AnnotateArgs) -> Result<()> {
    let cfg = ConfigFile::from_global(global)?;
    let corpus = existing(args.corpus, cfg.inputs.corpus.clone(), "corpus")?;
    let lexicon_path = existing(args.lexicon, cfg.inputs.lexicon.clone(), "lexicon")?;
    let endpoint = mlm_endpoint(global, &cfg);
    if args.mlm {
        check_endpoint(endpoint.as_deref().ok_or_else(|| usage("--mlm needs --mlm-endpoint"))?)?;
    }
    let lexicon = load_lexicon(&lexicon_path, &cfg.pipeline.classes)?;
    if global.dry_run {
        log::info!("dry run: inputs and configuration are valid");
        return Ok(());
    }
    let docs = read_docs(&corpus, args.format)?;
    let mut annotated = annotate_with_lexicon(&docs, &lexicon, cfg.pipeline.lexicon_match)?;
    let mut mlm_sentences = 0;
    if args.mlm {
        let backend = mlm_backend(endpoint.as_deref().expect("checked above"))?;
        let filtered = filter_for_mlm(&lexicon, backend.as_ref(), cfg.pipeline.mlm_top_k)?;
        let annotator = MlmAnnotator {
            backend: backend.as_ref(),
            lexicon: &filtered,
            thresholds: &cfg.pipeline.thresholds,
            pattern: &cfg.pipeline.pattern,
            batch_size: cfg.pipeline.mlm_batch_size,
        };
        let keys = &annotated.unlabeled;
        let sentences: Vec<Sentence> =
            keys.iter().map(|k| annotated.documents[k.doc].sentences[k.index].clone()).collect();
        for (k, outcome) in keys.iter().zip(annotator.annotate(&sentences)?) {
            mlm_sentences += usize::from(outcome.changed);
            annotated.documents[k.doc].sentences[k.index] = outcome.sentence;
        }
    }
    let s = &annotated.stats;
    log::info!(
        "lexicon matched {} entities ({} tokens) in {} sentences; {} sentences unmatched; masked LM labeled {}",
        s.matched_entities,
        s.matched_tokens,
        s.labeled_sentences,
        s.unlabeled_sentences,
        mlm_sentences
    );
    write_docs(global.out.as_deref(), &annotated.documents, CorpusFormat::Provenance)
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Unlabeled training corpus (`word POS ...`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unlabeled")]
    pub format: CorpusFormat,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Gold-labeled development corpus, scored after every iteration.
    #[arg(long)]
    pub dev: Option<PathBuf>,
}

pub fn run(global: &Global, args: RunArgs) -> Result<()> {
    let cfg = ConfigFile::from_global(global)?;
    let corpus = existing(args.corpus, cfg.inputs.corpus.clone(), "corpus")?;
    let lexicon_path = existing(args.lexicon, cfg.inputs.lexicon.clone(), "lexicon")?;
    let dev_path = args.dev.or(cfg.inputs.dev.clone());
    if let Some(d) = &dev_path {
        crate::manifest::require_file(d, "dev corpus")?;
    }
    let out = global.out.clone().or(cfg.inputs.out.clone()).ok_or_else(|| usage("no output directory given (--out)"))?;
    if out.is_file() {
        return Err(usage(format!("output {} is a file", out.display())));
    }
    let endpoint = mlm_endpoint(global, &cfg);
    if cfg.pipeline.stages.burn_in > 0 && endpoint.is_none() {
        return Err(usage("burn-in iterations need --mlm-endpoint"));
    }
    if let Some(ep) = &endpoint {
        check_endpoint(ep)?;
    }
    let tagger_endpoint = global
        .tagger_endpoint
        .clone()
        .or(cfg.inputs.tagger_endpoint.clone())
        .unwrap_or_else(|| "native".into());
    let lexicon = load_lexicon(&lexicon_path, &cfg.pipeline.classes)?;
    let manifest = RunManifest {
        config: global.config.clone(),
        corpus,
        lexicon: lexicon_path,
        dev: dev_path,
        out: out.clone(),
        seed: cfg.pipeline.seed,
        mlm_endpoint: endpoint,
        tagger_endpoint,
        pipeline: cfg.pipeline.clone(),
    };
    if global.dry_run {
        log::info!("dry run: inputs and configuration are valid");
        println!("{}", toml::to_string(&manifest)?);
        return Ok(());
    }

    let docs = read_docs(&manifest.corpus, args.format)?;
    let dev = manifest.dev.as_deref().map(|p| read_docs(p, CorpusFormat::Conll2003)).transpose()?;
    let backend = manifest.mlm_endpoint.as_deref().map(mlm_backend).transpose()?;
    let tagger = tagger(Some(&manifest.tagger_endpoint))?;
    let output = run_pipeline(
        &docs,
        &lexicon,
        &manifest.pipeline,
        Components { tagger: tagger.as_ref(), mlm: backend.as_deref() },
        dev.as_deref(),
    )?;

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("manifest.toml"), &toml::to_string(&manifest)?)?;
    if let Some(c) = &manifest.config {
        std::fs::copy(c, out.join("config.toml")).with_context(|| format!("copying {}", c.display()))?;
    }
    let mut metrics = String::new();
    for m in &output.metrics {
        metrics.push_str(&serde_json::to_string(m)?);
        metrics.push('\n');
    }
    write_text(&out.join("metrics.jsonl"), &metrics)?;
    let mut traces = String::new();
    for t in &output.traces {
        traces.push_str(&serde_json::to_string(t)?);
        traces.push('\n');
    }
    write_text(&out.join("traces.jsonl"), &traces)?;
    output.model.save(&out.join("model.json"))?;
    write_docs(Some(&out.join("labeled.conll")), &output.state.docs, CorpusFormat::Provenance)?;
    if let Some(m) = output.metrics.last().and_then(|m| m.dev.as_ref()) {
        log::info!("final dev P {:.2} R {:.2} F1 {:.2}", m.precision, m.recall, m.f1);
    }
    log::info!("wrote {}", out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "unlabeled")]
    pub format: CorpusFormat,
}

pub fn predict(global: &Global, args: PredictArgs) -> Result<()> {
    let cfg = ConfigFile::from_global(global)?;
    crate::manifest::require_file(&args.model, "model")?;
    let corpus = existing(args.corpus, cfg.inputs.corpus.clone(), "corpus")?;
    let model = TaggerModel::load(&args.model).map_err(|e| usage(format!("model {}: {e}", args.model.display())))?;
    if global.dry_run {
        log::info!("dry run: inputs and configuration are valid");
        return Ok(());
    }
    let endpoint = global.tagger_endpoint.clone().or(cfg.inputs.tagger_endpoint.clone());
    let tagger = tagger(endpoint.as_deref())?;
    let predictor = tagger.load(&model)?;
    let mut docs = read_docs(&corpus, args.format)?;
    for doc in &mut docs {
        let predictions = tag(predictor.as_ref(), &doc.sentences, &model.classes)?;
        for (sentence, pred) in doc.sentences.iter_mut().zip(predictions) {
            for t in &mut sentence.tokens {
                *t = lexner::corpus::Token::new(t.text.clone(), t.pos.as_deref());
            }
            for s in &pred.spans {
                sentence.set_span(s.start, s.end, &s.class, LabelSource::Tagger, Some(s.confidence));
            }
        }
    }
    write_docs(global.out.as_deref(), &docs, CorpusFormat::Provenance)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value = "provenance")]
    pub pred_format: CorpusFormat,
    #[arg(long, value_enum, default_value = "conll2003")]
    pub gold_format: CorpusFormat,
    /// Class mapping applied to gold labels: a TOML file of `FROM = "TO"`
    /// pairs, or `wnut` for the built-in WNUT-to-CoNLL table.
    #[arg(long)]
    pub mapping: Option<String>,
    /// Print JSON lines instead of the table.
    #[arg(long)]
    pub json: bool,
}

pub fn eval(global: &Global, args: EvalArgs) -> Result<()> {
    crate::manifest::require_file(&args.pred, "prediction file")?;
    crate::manifest::require_file(&args.gold, "gold file")?;
    let mapping = match args.mapping.as_deref() {
        None => None,
        Some("wnut") => Some(LabelMapping::wnut_to_conll()),
        Some(p) => {
            crate::manifest::require_file(Path::new(p), "mapping")?;
            Some(LabelMapping::load(Path::new(p)).map_err(|e| usage(format!("mapping {p}: {e}")))?)
        }
    };
    if global.dry_run {
        log::info!("dry run: inputs are valid");
        return Ok(());
    }
    let pred = read_docs(&args.pred, args.pred_format)?;
    let mut gold = read_docs(&args.gold, args.gold_format)?;
    if let Some(m) = &mapping {
        gold = map_labels(&gold, m)?;
    }
    let report = score_entities(&pred, &gold)?;
    let text = if args.json { report.to_json_lines() } else { report.to_string() };
    match &global.out {
        Some(p) => write_text(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// A `traces.jsonl` written by `run`.
    pub traces: PathBuf,
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub doc: Option<String>,
    #[arg(long)]
    pub iteration: Option<usize>,
    /// Also print the first N matching traces.
    #[arg(long, default_value_t = 0)]
    pub show: usize,
}

pub fn inspect_traces(_global: &Global, args: InspectArgs) -> Result<()> {
    crate::manifest::require_file(&args.traces, "trace file")?;
    let reader = BufReader::new(File::open(&args.traces)?);
    let mut counts: BTreeMap<(usize, String, String), usize> = BTreeMap::new();
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut shown = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", args.traces.display(), n + 1))?;
        let t = &rec.trace;
        if args.rule.as_deref().is_some_and(|r| r != t.rule.as_str())
            || args.doc.as_deref().is_some_and(|d| d != t.doc)
            || args.iteration.is_some_and(|i| i != rec.iteration)
        {
            continue;
        }
        if shown < args.show {
            let labels = |ls: &[lexner::corpus::Label]| ls.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(
                out,
                "#{} {} {} doc {} sentence {} [{}, {}): {} -> {} ({})",
                rec.iteration,
                rec.stage.as_str(),
                t.rule.as_str(),
                t.doc,
                t.sentence_id,
                t.start,
                t.end,
                labels(&t.before),
                labels(&t.after),
                t.reason
            )?;
            shown += 1;
        }
        *counts.entry((rec.iteration, rec.stage.as_str().to_string(), t.rule.as_str().to_string())).or_default() += 1;
    }
    writeln!(out, "{:>9}  {:<12} {:<18} {:>7}", "iteration", "stage", "rule", "changes")?;
    let mut total = 0;
    for ((it, stage, rule), c) in &counts {
        writeln!(out, "{it:>9}  {stage:<12} {rule:<18} {c:>7}")?;
        total += c;
    }
    writeln!(out, "{:>9}  {:<12} {:<18} {total:>7}", "", "", "total")?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub train_sentences: usize,
    #[arg(long, default_value_t = 500)]
    pub test_sentences: usize,
    /// Lexicon entries per class.
    #[arg(long, default_value_t = 10)]
    pub lexicon_size: usize,
}

const SYNTH_CONFIG: &str = "[inputs]
corpus = \"train.conll\"
lexicon = \"lexicon.lex\"
dev = \"test.conll\"
mlm_endpoint = \"stub:stub.json\"
out = \"run\"
";

pub fn synth(global: &Global, args: SynthArgs) -> Result<()> {
    let out = global.out.clone().ok_or_else(|| usage("no output directory given (--out)"))?;
    let defaults = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        seed: global.seed.unwrap_or(defaults.seed),
        train_sentences: args.train_sentences,
        test_sentences: args.test_sentences,
        lexicon_size: args.lexicon_size,
        ..defaults
    };
    if global.dry_run {
        log::info!("dry run: would write a synthetic corpus to {}", out.display());
        return Ok(());
    }
    let corpus = generate(&cfg);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write_docs(Some(&out.join("train.conll")), &corpus.train, CorpusFormat::Conll2003)?;
    write_docs(Some(&out.join("test.conll")), &corpus.test, CorpusFormat::Conll2003)?;
    corpus.lexicon.save(&out.join("lexicon.lex"))?;
    write_text(&out.join("stub.json"), &serde_json::to_string(&StubConfig::Vocab(corpus.stub))?)?;
    write_text(&out.join("run.toml"), SYNTH_CONFIG)?;
    log::info!("wrote {}", out.display());
    Ok(())
}
