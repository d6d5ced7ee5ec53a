//! Acceptance gate: one PASS/FAIL/SKIP line per criterion, nonzero exit on
//! any failure. Data-dependent checks run only when their inputs are set:
//! CONLL2003_TRAIN, CONLL2003_DEV and LEXNER_MLM_ENDPOINT.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use lexner::corpus::{read_corpus, ColumnConfig, Document, Sentence};
use lexner::eval::{score_entities, strip_labels, supervision_degree};
use lexner::lexicon::{annotate_with_lexicon, filter_for_mlm, Lexicon, MatchOptions};
use lexner::mlm::{classify_span, score_span, ClassScore, MlmAnnotator, StubBackend, StubConfig, TableStub, ThresholdTable, WireMlmBackend};
use lexner::rules::{apply_sieve, replay_traces, rule_ospd, RuleConfig};
use lexner::selftrain::{run_pipeline, Components, PipelineConfig, StageConfig};
use lexner::span_detector::{detect_spans, SpanPattern};
use lexner::synthetic::{generate, SyntheticConfig};
use lexner::tagger::NativeTagger;
use lexner::window_filter::{filter_sentence, WindowConfig};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn span_oracle_equivalence() -> Outcome {
    let mut r = rng(1);
    let cases: Vec<Vec<&str>> = (0..10_000).map(|_| random_tags(&mut r, 40)).collect();
    let pattern = SpanPattern::default();
    let t = Instant::now();
    let got: Vec<Vec<(usize, usize)>> = cases.iter().map(|c| detect_spans(c, &pattern)).collect();
    let elapsed = t.elapsed();
    let mismatches = cases.iter().zip(&got).filter(|(c, g)| span_oracle(c) != **g).count();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!("10000 sequences, {mismatches} mismatches, {:.3} s", secs(elapsed)),
    )
}

fn window_fixture_and_oracle() -> Outcome {
    let mut s = Sentence::from_words(
        0,
        &["EU", "rejects", "German", "call", "to", "boycott", "British", "lamb", "."],
        &["NNP", "VBZ", "NNP", "NN", "TO", "VB", "NNP", "NN", "."],
    );
    s.set_span(0, 1, &class("ORG"), lexner::corpus::LabelSource::Lexicon, None);
    s.set_span(6, 7, &class("MISC"), lexner::corpus::LabelSource::Lexicon, None);
    let segs = filter_sentence(&s, &WindowConfig::default()).unwrap();
    let text: Vec<String> = segs
        .iter()
        .map(|g| g.tokens.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" "))
        .collect();
    let fixture = text == ["EU rejects", "call to boycott British lamb ."];

    let mut r = rng(2);
    let mut mismatches = 0;
    for i in 0..5_000 {
        let cfg = WindowConfig { window: 1 + i % 7, nnps_walls: i % 2 == 0, admit_unlabeled: i % 3 == 0 };
        let s = random_labeled_sentence(&mut r, i, 30);
        let got: Vec<(usize, usize)> = filter_sentence(&s, &cfg).unwrap().iter().map(|g| (g.start, g.end)).collect();
        if got != window_oracle(&s, &cfg) {
            mismatches += 1;
        }
    }
    check(fixture && mismatches == 0, format!("fixture {text:?}, 5000 sentences, {mismatches} mismatches"))
}

fn mlm_oracle_and_boundaries() -> Outcome {
    let thresholds = ThresholdTable::default();
    let mut r = rng(3);
    let (mut worst, mut decisions_off, mut key_off) = (0.0f64, 0, 0);
    for _ in 0..1_000 {
        let case = random_mlm_case(&mut r);
        let stub = StubBackend::from_config(StubConfig::Table(TableStub { fills: case.fills.clone(), ..Default::default() }));
        let scores = score_span(&case.tokens, case.span, &case.lexicon, &stub).unwrap();
        let want = mlm_scores_oracle(&case);
        let got = score_map(&scores);
        if got.keys().ne(want.keys()) {
            key_off += 1;
            continue;
        }
        for (c, v) in &want {
            worst = worst.max((got[c] - v).abs());
        }
        if classify_span(&scores, &thresholds).map(|x| x.0) != classify_oracle(&want, &thresholds) {
            decisions_off += 1;
        }
    }

    let mut boundary_failures = Vec::new();
    let score = |c: &str, s: f64| ClassScore { class: class(c), score: s, best_exemplar: vec![] };
    for (name, th, other) in [("ORG", 0.28, "PER"), ("PER", 0.2, "ORG"), ("LOC", 0.1, "MISC"), ("MISC", 0.05, "LOC")] {
        let equal = classify_span(&[score(name, 0.25 + th), score(other, 0.25)], &thresholds);
        let lone = classify_span(&[score(name, th)], &thresholds);
        let above = classify_span(&[score(name, 0.25 + th + 1e-6), score(other, 0.25)], &thresholds);
        if equal.is_some() || lone.is_some() || above.map(|x| x.0) != Some(class(name)) {
            boundary_failures.push(name);
        }
    }
    check(
        worst <= 1e-12 && decisions_off == 0 && key_off == 0 && boundary_failures.is_empty(),
        format!(
            "1000 cases, max error {worst:.1e}, {decisions_off} decision and {key_off} class-set mismatches; boundary failures {boundary_failures:?}"
        ),
    )
}

fn sieve_properties() -> Outcome {
    let cfg = RuleConfig::default();
    let tagger = RunPredictor::new("PER", 0.97);
    let mut r = rng(4);
    let (mut nondet, mut ospd, mut replay, mut protected) = (0, 0, 0, 0);
    let mut traces: std::collections::BTreeMap<String, usize> = Default::default();
    for i in 0..1_000 {
        let doc = random_document(&mut r, i);
        let a = apply_sieve(&doc, &cfg.order, &cfg, Some(&tagger)).unwrap();
        let b = apply_sieve(&doc, &cfg.order, &cfg, Some(&tagger)).unwrap();
        nondet += usize::from(a != b);
        let (once, _) = rule_ospd(&doc);
        let (twice, again) = rule_ospd(&once);
        ospd += usize::from(twice != once || !again.is_empty());
        let labels = |d: &Document| d.sentences.iter().map(|s| s.labels()).collect::<Vec<_>>();
        let replayed = replay_traces(&doc, &a.traces).unwrap();
        replay += usize::from(labels(&replayed) != labels(&a.document) || a.traces.iter().any(|t| t.before == t.after));
        let kept = doc.sentences.iter().zip(&a.document.sentences).all(|(x, y)| {
            x.tokens.iter().zip(&y.tokens).all(|(p, q)| !p.is_protected() || (p.label == q.label && p.source == q.source))
        });
        protected += usize::from(!kept);
        for t in &a.traces {
            *traces.entry(t.rule.to_string()).or_default() += 1;
        }
    }
    check(
        nondet + ospd + replay + protected == 0,
        format!(
            "1000 documents, traces {traces:?}; violations: determinism {nondet}, ospd idempotence {ospd}, trace completeness {replay}, protected labels {protected}"
        ),
    )
}

fn scorer_fixture_check() -> Outcome {
    let (pred, gold) = scorer_fixture();
    let report = score_entities(&pred, &gold).unwrap();
    let got = report_rows(&report);
    let want: Vec<(String, String, String, String)> = SCORER_EXPECTED
        .iter()
        .map(|r| (r.0.to_string(), r.1.to_string(), r.2.to_string(), r.3.to_string()))
        .collect();
    let o = &report.overall;
    check(got == want, format!("20 sentences, overall P {:.2} R {:.2} F1 {:.2}", o.precision, o.recall, o.f1))
}

fn synthetic_experiment() -> Outcome {
    let t = Instant::now();
    let corpus = generate(&SyntheticConfig::default());
    let stub = StubBackend::from_config(StubConfig::Vocab(corpus.stub.clone()));
    let input = strip_labels(&corpus.train);
    let f1 = |model| score_entities(&tag_docs(&NativeTagger, model, &corpus.test), &corpus.test).unwrap().overall.f1;

    let base_cfg = PipelineConfig { stages: StageConfig::none(), ..Default::default() };
    let base = run_pipeline(&input, &corpus.lexicon, &base_cfg, Components { tagger: &NativeTagger, mlm: None }, None).unwrap();
    let cfg = PipelineConfig::default();
    let run = || run_pipeline(&input, &corpus.lexicon, &cfg, Components { tagger: &NativeTagger, mlm: Some(&stub) }, None).unwrap();
    let full = run();
    let again = run();
    let elapsed = t.elapsed();
    let deterministic = full.model == again.model && full.metrics == again.metrics && full.traces == again.traces;
    let (b, f) = (f1(&base.model), f1(&full.model));
    check(
        f - b >= 10.0 && deterministic && elapsed < Duration::from_secs(120),
        format!(
            "{} train sentences, lexicon-only F1 {b:.2}, 1/2/1 schedule F1 {f:.2} (+{:.2}), deterministic {deterministic}, {:.1} s",
            corpus.train.iter().map(|d| d.sentences.len()).sum::<usize>(),
            f - b,
            secs(elapsed)
        ),
    )
}

fn seed_lexicon() -> Lexicon {
    Lexicon::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/conll_seed.lex")).unwrap()
}

fn read_conll(path: &Path) -> lexner::Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file), &ColumnConfig::conll2003())
}

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| !p.as_os_str().is_empty())
}

fn supervision_accounting() -> Outcome {
    let Some(path) = env_path("CONLL2003_TRAIN") else {
        return Outcome::Skip("CONLL2003_TRAIN not set".into());
    };
    let gold = match read_conll(&path) {
        Ok(g) => g,
        Err(e) => return Outcome::Fail(format!("{}: {e}", path.display())),
    };
    let weak = annotate_with_lexicon(&strip_labels(&gold), &seed_lexicon(), MatchOptions::default()).unwrap();
    let sd = supervision_degree(&weak.documents, &gold).unwrap();
    let pct = format!("{:.2}", sd.percentage);
    check(
        pct == "9.13" && sd.labeled_tokens == 2569,
        format!(
            "{pct}% of {} gold entities ({} annotated, {} correct), {} labeled tokens; expected 9.13% and 2569",
            sd.gold_entities, sd.annotated_entities, sd.correct_entities, sd.labeled_tokens
        ),
    )
}

fn unsupervised_mlm() -> Outcome {
    let (Some(path), Ok(endpoint)) = (env_path("CONLL2003_DEV"), std::env::var("LEXNER_MLM_ENDPOINT")) else {
        return Outcome::Skip("CONLL2003_DEV or LEXNER_MLM_ENDPOINT not set".into());
    };
    let result = (|| -> lexner::Result<(f64, f64)> {
        let gold = read_conll(&path)?;
        let backend = WireMlmBackend::connect(&endpoint)?;
        let lexicon = filter_for_mlm(&seed_lexicon(), &backend, 20)?;
        let thresholds = ThresholdTable::default();
        let pattern = SpanPattern::default();
        let annotator = MlmAnnotator { backend: &backend, lexicon: &lexicon, thresholds: &thresholds, pattern: &pattern, batch_size: 64 };
        let mut pred = strip_labels(&gold);
        for doc in &mut pred {
            let outcomes = annotator.annotate(&doc.sentences)?;
            doc.sentences = outcomes.into_iter().map(|o| o.sentence).collect();
        }
        let report = score_entities(&pred, &gold)?;
        let per = report.per_class.get(&class("PER")).map_or(0.0, |m| m.f1);
        Ok((report.overall.f1, per))
    })();
    match result {
        Ok((f1, per)) => check(
            (f1 - 56.41).abs() <= 5.0 && (per - 73.71).abs() <= 5.0,
            format!("overall F1 {f1:.2} (target 56.41 +/- 5), PER F1 {per:.2} (target 73.71 +/- 5)"),
        ),
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("span-detector-oracle", span_oracle_equivalence),
        ("window-filter-fixture-and-oracle", window_fixture_and_oracle),
        ("mlm-scoring-oracle", mlm_oracle_and_boundaries),
        ("sieve-properties", sieve_properties),
        ("scorer-fidelity", scorer_fixture_check),
        ("synthetic-self-training", synthetic_experiment),
        ("supervision-accounting", supervision_accounting),
        ("unsupervised-mlm-conll-dev", unsupervised_mlm),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
