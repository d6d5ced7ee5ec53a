//! Three-stage self-training: burn-in, intermediate, burn-out.
//!
//! Each iteration proposes labels for the unlabeled pool U, corrects them
//! with the rule sieve, moves the sentences whose labels changed into the
//! labeled pool L and retrains the tagger from scratch on window-filtered L.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{default_classes, Document, EntityClass, EntitySpan, Label, LabelSource, Sentence, SentenceKey};
use crate::error::{Error, Result};
use crate::eval::{score_entities, Metrics};
use crate::lexicon::{annotate_with_lexicon, filter_for_mlm, Lexicon, MatchOptions};
use crate::mlm::{MlmAnnotator, MlmBackend, ThresholdTable};
use crate::rules::{DCandidate, RuleConfig, RuleName, RuleTrace, SeedFilter, Sieve};
use crate::span_detector::SpanPattern;
use crate::tagger::{predict, Predictor, Tagger, TaggerHyperparams, TaggerModel, TaggerPrediction};
use crate::window_filter::{filter_sentence, TrainingSegment, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    BurnIn,
    Intermediate,
    BurnOut,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::BurnIn => "burn-in",
            StageKind::Intermediate => "intermediate",
            StageKind::BurnOut => "burn-out",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub burn_in: usize,
    pub intermediate: usize,
    pub burn_out: usize,
    /// Must equal the sum of the stage counts when given.
    pub iterations: Option<usize>,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig { burn_in: 1, intermediate: 2, burn_out: 1, iterations: Some(4) }
    }
}

impl StageConfig {
    pub fn none() -> Self {
        StageConfig { burn_in: 0, intermediate: 0, burn_out: 0, iterations: Some(0) }
    }

    pub fn total(&self) -> usize {
        self.burn_in + self.intermediate + self.burn_out
    }

    pub fn validate(&self) -> Result<()> {
        match self.iterations {
            Some(n) if n != self.total() => Err(Error::Config(format!(
                "{n} iterations but the stages add up to {}",
                self.total()
            ))),
            _ => Ok(()),
        }
    }

    pub fn schedule(&self) -> Vec<StageKind> {
        let mut out = vec![StageKind::BurnIn; self.burn_in];
        out.extend(vec![StageKind::Intermediate; self.intermediate]);
        out.extend(vec![StageKind::BurnOut; self.burn_out]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub classes: Vec<EntityClass>,
    pub stages: StageConfig,
    pub window: WindowConfig,
    pub rules: RuleConfig,
    pub thresholds: ThresholdTable,
    pub tagger: TaggerHyperparams,
    pub pattern: SpanPattern,
    pub lexicon_match: MatchOptions,
    /// Per-class cap on exemplars used for cloze scoring.
    pub mlm_top_k: usize,
    pub mlm_batch_size: usize,
    /// Keep only this many randomly chosen unlabeled sentences.
    pub unlabeled_sample: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 13,
            classes: default_classes(),
            stages: StageConfig::default(),
            window: WindowConfig::default(),
            rules: RuleConfig::default(),
            thresholds: ThresholdTable::default(),
            tagger: TaggerHyperparams::default(),
            pattern: SpanPattern::default(),
            lexicon_match: MatchOptions::default(),
            mlm_top_k: 20,
            mlm_batch_size: 64,
            unlabeled_sample: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("empty class set".into()));
        }
        self.stages.validate()?;
        self.window.validate()?;
        self.rules.validate()?;
        self.thresholds.validate()?;
        self.tagger.validate()?;
        self.pattern.validate()?;
        if self.mlm_top_k == 0 || self.mlm_batch_size == 0 {
            return Err(Error::Config("mlm_top_k and mlm_batch_size must be positive".into()));
        }
        Ok(())
    }

    fn hyperparams(&self) -> TaggerHyperparams {
        TaggerHyperparams { seed: self.seed, ..self.tagger.clone() }
    }
}

/// Runtime collaborators of the pipeline.
pub struct Components<'a> {
    pub tagger: &'a dyn Tagger,
    pub mlm: Option<&'a dyn MlmBackend>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState {
    /// Working corpus; sentences in L carry their accepted labels.
    pub docs: Vec<Document>,
    pub labeled: BTreeSet<SentenceKey>,
    pub unlabeled: BTreeSet<SentenceKey>,
    /// Sentences moved into L by the latest iteration.
    pub harvested: Vec<SentenceKey>,
    /// New sentences made by affix stripping, trained on with L.
    pub synthetic: Vec<Sentence>,
    pub model: Option<TaggerModel>,
    pub iteration: usize,
}

impl PipelineState {
    pub fn sentence(&self, key: SentenceKey) -> &Sentence {
        &self.docs[key.doc].sentences[key.index]
    }

    pub fn check(&self) -> Result<()> {
        if let Some(k) = self.labeled.intersection(&self.unlabeled).next() {
            return Err(Error::InvalidArgument(format!("sentence {k:?} is both labeled and unlabeled")));
        }
        Ok(())
    }

    /// Window-filtered training material from L and the synthetic sentences.
    pub fn training_segments(&self, window: &WindowConfig) -> Result<Vec<TrainingSegment>> {
        let mut out = Vec::new();
        for key in &self.labeled {
            out.extend(filter_sentence(self.sentence(*key), window)?);
        }
        for s in &self.synthetic {
            out.extend(filter_sentence(s, window)?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub stage: String,
    pub labeled: usize,
    pub unlabeled: usize,
    pub harvested: usize,
    pub synthetic: usize,
    pub mlm_sentences: usize,
    pub segments: usize,
    pub rule_traces: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub stage: StageKind,
    #[serde(flatten)]
    pub trace: RuleTrace,
}

pub struct IterationReport {
    pub metrics: IterationMetrics,
    pub traces: Vec<TraceRecord>,
}

/// Writes `spans` onto `sentence`, skipping any that touch a protected label.
fn overlay(sentence: &mut Sentence, spans: &[EntitySpan]) {
    for sp in spans {
        let blocked = sentence.any_protected(sp.start, sp.end)
            || sentence
                .tokens
                .get(sp.end)
                .is_some_and(|t| t.is_protected() && matches!(t.label, Label::I(_)));
        if !blocked {
            sentence.set_span(sp.start, sp.end, &sp.class, sp.source, sp.confidence);
        }
    }
}

/// `primary` spans win; `secondary` spans are kept only where they overlap
/// none of them.
fn combine(base: &Sentence, primary: &[EntitySpan], secondary: &[EntitySpan]) -> Sentence {
    let kept: Vec<EntitySpan> = secondary
        .iter()
        .filter(|s| !primary.iter().any(|p| p.overlaps(s.start, s.end)))
        .cloned()
        .collect();
    let mut out = base.clone();
    overlay(&mut out, &kept);
    overlay(&mut out, primary);
    out
}

fn tagger_spans(sentence: &Sentence, pred: &TaggerPrediction) -> Vec<EntitySpan> {
    pred.spans
        .iter()
        .map(|s| EntitySpan {
            sentence_id: sentence.id,
            start: s.start,
            end: s.end,
            class: s.class.clone(),
            source: LabelSource::Tagger,
            confidence: Some(s.confidence),
        })
        .collect()
}

pub struct SelfTrainer<'a> {
    pub config: &'a PipelineConfig,
    pub components: Components<'a>,
    /// Lexicon used for cloze scoring, already filtered.
    pub mlm_lexicon: Option<&'a Lexicon>,
    pub dev: Option<&'a [Document]>,
}

impl SelfTrainer<'_> {
    fn train(&self, state: &PipelineState) -> Result<(TaggerModel, usize)> {
        let segments = state.training_segments(&self.config.window)?;
        if segments.is_empty() {
            return Err(Error::Tagger("labeled pool yields no training segments".into()));
        }
        let model = self.components.tagger.train(&segments, &self.config.classes, &self.config.hyperparams())?;
        Ok((model, segments.len()))
    }

    fn predictor(&self, state: &PipelineState) -> Result<Box<dyn Predictor>> {
        let model = state.model.as_ref().ok_or_else(|| Error::Tagger("no trained model".into()))?;
        self.components.tagger.load(model)
    }

    fn mlm_spans(&self, sentences: &[Sentence]) -> Result<Vec<Vec<EntitySpan>>> {
        let (Some(backend), Some(lexicon)) = (self.components.mlm, self.mlm_lexicon) else {
            return Err(Error::Config("this stage needs a masked-LM backend".into()));
        };
        let annotator = MlmAnnotator {
            backend,
            lexicon,
            thresholds: &self.config.thresholds,
            pattern: &self.config.pattern,
            batch_size: self.config.mlm_batch_size,
        };
        Ok(annotator.annotate(sentences)?.into_iter().map(|o| o.accepted).collect())
    }

    pub fn evaluate(&self, model: &TaggerModel) -> Result<Option<Metrics>> {
        let Some(dev) = self.dev else { return Ok(None) };
        let predictor = self.components.tagger.load(model)?;
        let mut pred = dev.to_vec();
        for doc in &mut pred {
            let out = predict(predictor.as_ref(), &doc.sentences, &self.config.classes)?;
            for (s, p) in doc.sentences.iter_mut().zip(out) {
                for (t, l) in s.tokens.iter_mut().zip(p.labels) {
                    t.label = l;
                }
            }
        }
        Ok(Some(score_entities(&pred, dev)?.overall))
    }

    /// Runs one iteration of `stage` and commits it to `state`.
    pub fn run_iteration(&self, state: &mut PipelineState, stage: StageKind) -> Result<IterationReport> {
        state.check()?;
        let iteration = state.iteration + 1;
        let keys: Vec<SentenceKey> = state.unlabeled.iter().copied().collect();
        let originals: Vec<Sentence> = keys.iter().map(|k| state.sentence(*k).clone()).collect();
        let mut mlm_sentences = 0;

        let mut candidates: BTreeMap<SentenceKey, Sentence> = BTreeMap::new();
        if !keys.is_empty() {
            let predictor = self.predictor(state)?;
            let preds = predict(predictor.as_ref(), &originals, &self.config.classes)?;
            let tagged: Vec<Vec<EntitySpan>> =
                originals.iter().zip(&preds).map(|(s, p)| tagger_spans(s, p)).collect();
            match stage {
                StageKind::BurnIn => {
                    let mlm = self.mlm_spans(&originals)?;
                    for ((key, base), (m, t)) in keys.iter().zip(&originals).zip(mlm.iter().zip(&tagged)) {
                        if m.is_empty() {
                            continue;
                        }
                        let proposal = combine(base, m, t);
                        if proposal.label_diff(base) > 0 {
                            mlm_sentences += 1;
                            candidates.insert(*key, proposal);
                        }
                    }
                }
                StageKind::Intermediate => {
                    let mlm = match self.components.mlm {
                        Some(_) => self.mlm_spans(&originals)?,
                        None => vec![Vec::new(); originals.len()],
                    };
                    for ((key, base), (m, t)) in keys.iter().zip(&originals).zip(mlm.iter().zip(&tagged)) {
                        let proposal = combine(base, t, m);
                        if proposal.label_diff(base) > 0 {
                            if proposal.tokens.iter().any(|tk| tk.source == LabelSource::Mlm) {
                                mlm_sentences += 1;
                            }
                            candidates.insert(*key, proposal);
                        }
                    }
                }
                StageKind::BurnOut => {
                    for ((key, base), t) in keys.iter().zip(&originals).zip(&tagged) {
                        let mut proposal = base.clone();
                        overlay(&mut proposal, t);
                        candidates.insert(*key, proposal);
                    }
                }
            }
        }

        let mut traces = Vec::new();
        let mut synthetic: Vec<DCandidate> = Vec::new();
        if stage != StageKind::BurnOut && !candidates.is_empty() {
            let order: Vec<RuleName> = self
                .config
                .rules
                .order
                .iter()
                .copied()
                .filter(|r| stage == StageKind::Intermediate || !r.is_confidence_based())
                .collect();
            let predictor = if order.contains(&RuleName::AffixStrip) { Some(self.predictor(state)?) } else { None };
            let sieve = Sieve {
                config: &self.config.rules,
                order: &order,
                tagger: predictor.as_deref(),
                seeds: SeedFilter { tagger_only: stage == StageKind::Intermediate },
            };
            let touched: BTreeSet<usize> = candidates.keys().map(|k| k.doc).collect();
            for d in touched {
                let mut doc = state.docs[d].clone();
                let mut scope = vec![false; doc.sentences.len()];
                for (key, proposal) in candidates.range(SentenceKey::new(d, 0)..SentenceKey::new(d + 1, 0)) {
                    doc.sentences[key.index] = proposal.clone();
                    scope[key.index] = true;
                }
                let out = sieve.apply(&doc, Some(&scope))?;
                for (i, in_scope) in scope.iter().enumerate() {
                    if *in_scope {
                        candidates.insert(SentenceKey::new(d, i), out.document.sentences[i].clone());
                    }
                }
                traces.extend(out.traces.into_iter().map(|trace| TraceRecord { iteration, stage, trace }));
                synthetic.extend(out.d_candidates);
            }
        }

        let mut harvested = Vec::new();
        for (key, proposal) in candidates {
            let moved = stage == StageKind::BurnOut || proposal.label_diff(state.sentence(key)) > 0;
            if moved {
                state.docs[key.doc].sentences[key.index] = proposal;
                state.unlabeled.remove(&key);
                state.labeled.insert(key);
                harvested.push(key);
            }
        }
        state.synthetic.extend(synthetic.into_iter().map(|c| c.sentence));
        state.harvested = harvested;
        state.iteration = iteration;

        let (model, segments) = self.train(state)?;
        let dev = self.evaluate(&model)?;
        state.model = Some(model);

        let mut rule_traces: BTreeMap<String, usize> = BTreeMap::new();
        for t in &traces {
            *rule_traces.entry(t.trace.rule.to_string()).or_default() += 1;
        }
        Ok(IterationReport {
            metrics: IterationMetrics {
                iteration,
                stage: stage.to_string(),
                labeled: state.labeled.len(),
                unlabeled: state.unlabeled.len(),
                harvested: state.harvested.len(),
                synthetic: state.synthetic.len(),
                mlm_sentences,
                segments,
                rule_traces,
                dev,
            },
            traces,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub model: TaggerModel,
    pub metrics: Vec<IterationMetrics>,
    pub traces: Vec<TraceRecord>,
    pub state: PipelineState,
}

/// Lexicon annotation, initial training, then the stage schedule. `corpus`
/// should be unlabeled; gold labels in it are kept and never overwritten.
pub fn run_pipeline(
    corpus: &[Document],
    lexicon: &Lexicon,
    config: &PipelineConfig,
    components: Components<'_>,
    dev: Option<&[Document]>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let schedule = config.stages.schedule();
    let annotated = annotate_with_lexicon(corpus, lexicon, config.lexicon_match)?;
    let mut unlabeled: BTreeSet<SentenceKey> = annotated.unlabeled.into_iter().collect();
    if let Some(n) = config.unlabeled_sample {
        let mut pool: Vec<SentenceKey> = unlabeled.iter().copied().collect();
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        pool.truncate(n);
        unlabeled = pool.into_iter().collect();
    }
    let mut state = PipelineState {
        docs: annotated.documents,
        labeled: annotated.labeled.into_iter().collect(),
        unlabeled,
        harvested: Vec::new(),
        synthetic: Vec::new(),
        model: None,
        iteration: 0,
    };

    let needs_mlm = schedule.contains(&StageKind::BurnIn);
    let mlm_lexicon = match components.mlm {
        Some(backend) => Some(filter_for_mlm(lexicon, backend, config.mlm_top_k)?),
        None if needs_mlm => return Err(Error::Config("burn-in needs a masked-LM backend".into())),
        None => None,
    };
    let trainer = SelfTrainer { config, components, mlm_lexicon: mlm_lexicon.as_ref(), dev };

    let (model, segments) = trainer.train(&state)?;
    let mut metrics = vec![IterationMetrics {
        iteration: 0,
        stage: "lexicon".into(),
        labeled: state.labeled.len(),
        unlabeled: state.unlabeled.len(),
        harvested: 0,
        synthetic: 0,
        mlm_sentences: 0,
        segments,
        rule_traces: BTreeMap::new(),
        dev: trainer.evaluate(&model)?,
    }];
    state.model = Some(model);
    log::info!("lexicon: |L|={} |U|={}", state.labeled.len(), state.unlabeled.len());

    let mut traces = Vec::new();
    for stage in schedule {
        let report = trainer.run_iteration(&mut state, stage).map_err(|e| Error::Iteration {
            iteration: state.iteration + 1,
            stage: stage.to_string(),
            source: Box::new(e),
        })?;
        log::info!(
            "iteration {} ({stage}): |L|={} |U|={} |D|={}",
            report.metrics.iteration,
            report.metrics.labeled,
            report.metrics.unlabeled,
            report.metrics.harvested
        );
        metrics.push(report.metrics);
        traces.extend(report.traces);
    }
    let model = state.model.clone().expect("trained above");
    Ok(PipelineOutput { model, metrics, traces, state })
}
