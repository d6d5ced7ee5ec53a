mod common;

use std::sync::Mutex;

use common::{random_labeled_sentence, rng};
use lexner::corpus::{default_classes, Document, EntityClass, Label, Sentence};
use lexner::eval::strip_labels;
use lexner::mlm::{StubBackend, StubConfig};
use lexner::selftrain::{run_pipeline, Components, PipelineConfig};
use lexner::synthetic::{generate, SyntheticConfig};
use lexner::tagger::{
    predict, serve_tagger, Capabilities, NativeTagger, PluginTagger, Predictor, Tagger, TaggerHyperparams, TaggerModel,
};
use lexner::window_filter::{is_wall, TrainingSegment, WindowConfig};
use lexner::wire::spawn_service;
use proptest::prelude::*;

fn corpus() -> lexner::synthetic::SyntheticCorpus {
    generate(&SyntheticConfig { train_sentences: 400, test_sentences: 100, ..Default::default() })
}

fn gold_segments(docs: &[Document]) -> Vec<TrainingSegment> {
    docs.iter().flat_map(|d| &d.sentences).map(TrainingSegment::whole).collect()
}

#[test]
fn fits_a_separable_training_set() {
    let c = corpus();
    let segs = gold_segments(&c.train);
    let model = NativeTagger.train(&segs, &default_classes(), &TaggerHyperparams::default()).unwrap();
    let p = NativeTagger.load(&model).unwrap();
    let sentences: Vec<Sentence> = c.train.iter().flat_map(|d| d.sentences.clone()).collect();
    let preds = predict(p.as_ref(), &sentences, &default_classes()).unwrap();
    let (mut right, mut total) = (0usize, 0usize);
    for (s, pr) in sentences.iter().zip(&preds) {
        for (t, l) in s.tokens.iter().zip(&pr.labels) {
            total += 1;
            right += usize::from(&t.label == l);
        }
    }
    let acc = right as f64 / total as f64;
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn training_is_deterministic() {
    let c = corpus();
    let segs = gold_segments(&c.train);
    let hp = TaggerHyperparams { seed: 3, ..Default::default() };
    let a = NativeTagger.train(&segs, &default_classes(), &hp).unwrap();
    let b = NativeTagger.train(&segs, &default_classes(), &hp).unwrap();
    assert_eq!(a, b);
    let other = NativeTagger.train(&segs, &default_classes(), &TaggerHyperparams { seed: 4, ..hp }).unwrap();
    assert_eq!(other.signature, a.signature);
}

#[test]
fn model_files_round_trip() {
    let c = corpus();
    let model = NativeTagger.train(&gold_segments(&c.train), &default_classes(), &TaggerHyperparams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    assert_eq!(TaggerModel::load(&path).unwrap(), model);
    let mut foreign = model.clone();
    foreign.signature = "other/1".into();
    assert!(NativeTagger.load(&foreign).is_err());
}

fn served_native() -> PluginTagger {
    let channel = spawn_service(|r, w| {
        let _ = serve_tagger(&NativeTagger, r, w);
    });
    PluginTagger::new(channel).unwrap()
}

#[test]
fn plugin_protocol_round_trip_equals_in_process() {
    let c = corpus();
    let plugin = served_native();
    let caps = plugin.capabilities().unwrap();
    assert_eq!((caps.protocol, caps.name.as_str(), caps.calibrated), (1, NativeTagger.capabilities().unwrap().name.as_str(), false));
    let segs = gold_segments(&c.train);
    let hp = TaggerHyperparams::default();
    let remote = plugin.train(&segs, &default_classes(), &hp).unwrap();
    let local = NativeTagger.train(&segs, &default_classes(), &hp).unwrap();
    assert_eq!(remote, local);
    let test: Vec<Sentence> = c.test.iter().flat_map(|d| d.sentences.clone()).collect();
    let a = predict(plugin.load(&remote).unwrap().as_ref(), &test, &default_classes()).unwrap();
    let b = predict(NativeTagger.load(&local).unwrap().as_ref(), &test, &default_classes()).unwrap();
    assert_eq!(a, b);
    assert!(plugin.train(&[], &default_classes(), &hp).is_err());
}

#[test]
fn pipeline_runs_through_plugins() {
    let c = generate(&SyntheticConfig { train_sentences: 200, test_sentences: 50, ..Default::default() });
    let stub = StubBackend::from_config(StubConfig::Vocab(c.stub.clone()));
    let input = strip_labels(&c.train);
    let cfg = PipelineConfig::default();
    let local = run_pipeline(&input, &c.lexicon, &cfg, Components { tagger: &NativeTagger, mlm: Some(&stub) }, None).unwrap();
    let plugin = served_native();
    let remote = run_pipeline(&input, &c.lexicon, &cfg, Components { tagger: &plugin, mlm: Some(&stub) }, None).unwrap();
    assert_eq!(local.model, remote.model);
    assert_eq!(local.metrics, remote.metrics);
}

/// Delegates to the native tagger and keeps every training segment it sees.
struct Recording {
    seen: Mutex<Vec<TrainingSegment>>,
}

impl Tagger for Recording {
    fn capabilities(&self) -> lexner::Result<Capabilities> {
        NativeTagger.capabilities()
    }

    fn train(&self, segments: &[TrainingSegment], classes: &[EntityClass], hp: &TaggerHyperparams) -> lexner::Result<TaggerModel> {
        self.seen.lock().unwrap().extend_from_slice(segments);
        NativeTagger.train(segments, classes, hp)
    }

    fn load(&self, model: &TaggerModel) -> lexner::Result<Box<dyn Predictor>> {
        NativeTagger.load(model)
    }
}

#[test]
fn tagger_never_trains_on_unlabeled_proper_nouns() {
    let c = corpus();
    let stub = StubBackend::from_config(StubConfig::Vocab(c.stub.clone()));
    let rec = Recording { seen: Mutex::new(Vec::new()) };
    let cfg = PipelineConfig::default();
    run_pipeline(&strip_labels(&c.train), &c.lexicon, &cfg, Components { tagger: &rec, mlm: Some(&stub) }, None).unwrap();
    let seen = rec.seen.into_inner().unwrap();
    assert!(!seen.is_empty());
    let walls = WindowConfig { nnps_walls: false, ..cfg.window };
    for seg in &seen {
        assert!(seg.tokens.iter().all(|t| !is_wall(t, &walls)), "{:?}", seg.tokens);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predictions_are_valid_bio(seed in any::<u64>()) {
        let mut r = rng(seed);
        let train: Vec<TrainingSegment> = (0..20).map(|i| TrainingSegment::whole(&random_labeled_sentence(&mut r, i, 12))).collect();
        prop_assume!(train.iter().any(|s| !s.is_empty()));
        let model = NativeTagger.train(&train, &default_classes(), &TaggerHyperparams { epochs: 2, ..Default::default() }).unwrap();
        let p = NativeTagger.load(&model).unwrap();
        let probe: Vec<Sentence> = (0..10).map(|i| random_labeled_sentence(&mut r, i, 15)).collect();
        for (s, pr) in probe.iter().zip(p.predict_batch(&probe).unwrap()) {
            pr.validate(s.len()).unwrap();
            let mut prev: Option<&Label> = None;
            for l in &pr.labels {
                prop_assert!(l.may_follow(prev));
                prev = Some(l);
            }
        }
    }
}
