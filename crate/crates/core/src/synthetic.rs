//! Generated corpora with known ground truth: four classes with disjoint
//! vocabularies, Zipf-distributed names, context templates (some cue the
//! class, some do not) and a matching deterministic masked-LM stub.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityClass, LabelSource, Sentence, Token};
use crate::lexicon::{Lexicon, LexiconEntry};
use crate::mlm::VocabStub;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub sentences_per_doc: usize,
    pub names_per_class: usize,
    pub zipf_exponent: f64,
    pub lexicon_size: usize,
    /// Shares of class-cued and class-neutral templates; the rest have no
    /// entity.
    pub cued_share: f64,
    pub neutral_share: f64,
    pub stub_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 7,
            train_sentences: 2000,
            test_sentences: 500,
            sentences_per_doc: 10,
            names_per_class: 100,
            zipf_exponent: 0.8,
            lexicon_size: 10,
            cued_share: 0.5,
            neutral_share: 0.35,
            stub_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Gold-labeled training documents.
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    /// The most frequent training names of every class.
    pub lexicon: Lexicon,
    pub stub: VocabStub,
}

const CLASSES: [&str; 4] = ["PER", "ORG", "LOC", "MISC"];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "ta", "vo", "zu", "bri", "del", "fan", "gor", "hul", "ist", "jam", "kel", "mar", "nor",
    "pel", "quin", "ros", "sul", "tor", "ul", "wen",
];

// `{C}` is an entity of class C, `{*}` of any class; other tokens are word/POS.
const CUED: [(&str, &str); 16] = [
    ("PER", "{PER} said/VBD on/IN Tuesday/NNP ./."),
    ("PER", "coach/NN {PER} resigned/VBD ./."),
    ("PER", "spokesman/NN {PER} declined/VBD to/TO comment/VB ./."),
    ("PER", "{PER} ,/, who/WP scored/VBD twice/RB ,/, was/VBD injured/VBN ./."),
    ("ORG", "shares/NNS of/IN {ORG} rose/VBD 3/CD percent/NN ./."),
    ("ORG", "{ORG} reported/VBD a/DT quarterly/JJ profit/NN ./."),
    ("ORG", "{ORG} 21/CD 14/CD"),
    ("ORG", "analysts/NNS at/IN {ORG} cut/VBD their/PRP$ forecast/NN ./."),
    ("LOC", "he/PRP flew/VBD to/TO {LOC} ./."),
    ("LOC", "{LOC} 1996-08-30/CD"),
    ("LOC", "the/DT talks/NNS were/VBD held/VBN in/IN {LOC} ./."),
    ("LOC", "rain/NN fell/VBD across/IN northern/JJ {LOC} ./."),
    ("MISC", "the/DT {MISC} team/NN won/VBD ./."),
    ("MISC", "{MISC} officials/NNS denied/VBD the/DT report/NN ./."),
    ("MISC", "a/DT {MISC} -/: born/VBN player/NN signed/VBD ./."),
    ("MISC", "fans/NNS sang/VBD the/DT {MISC} anthem/NN ./."),
];

const NEUTRAL: [&str; 6] = [
    "{*} was/VBD mentioned/VBN again/RB ./.",
    "reports/NNS about/IN {*} appeared/VBD ./.",
    "{*} and/CC {*} were/VBD named/VBN ./.",
    "the/DT story/NN featured/VBD {*} prominently/RB ./.",
    "Monday/NNP 's/POS news/NN focused/VBD on/IN {*} ./.",
    "nobody/NN expected/VBD {*} to/TO matter/VB ./.",
];

const EMPTY: [&str; 3] = [
    "the/DT market/NN was/VBD quiet/JJ ./.",
    "prices/NNS fell/VBD on/IN Friday/NNP ./.",
    "it/PRP rained/VBD all/DT day/NN ./.",
];

struct Names {
    /// Per class: surfaces, ordered by rank.
    by_class: BTreeMap<EntityClass, Vec<Vec<String>>>,
    sampler: WeightedIndex<f64>,
}

fn fresh_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.gen_range(2..=3);
        let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        w[..1].make_ascii_uppercase();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

fn make_names(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Names {
    let mut used: BTreeSet<String> = ["Tuesday", "Monday", "Friday"].iter().map(|s| s.to_string()).collect();
    let mut by_class = BTreeMap::new();
    for class in CLASSES {
        let two_word_share = match class {
            "PER" => 0.5,
            "ORG" => 0.3,
            _ => 0.0,
        };
        let names = (0..cfg.names_per_class)
            .map(|_| {
                let len = if rng.gen_bool(two_word_share) { 2 } else { 1 };
                (0..len).map(|_| fresh_word(rng, &mut used)).collect()
            })
            .collect();
        by_class.insert(EntityClass::from(class), names);
    }
    let weights: Vec<f64> = (1..=cfg.names_per_class).map(|r| (r as f64).powf(-cfg.zipf_exponent)).collect();
    Names { by_class, sampler: WeightedIndex::new(weights).expect("positive weights") }
}

fn realize(id: usize, template: &str, names: &Names, rng: &mut ChaCha8Rng) -> Sentence {
    let mut sentence = Sentence::new(id, Vec::new());
    for piece in template.split(' ') {
        if let Some(slot) = piece.strip_prefix('{').and_then(|p| p.strip_suffix('}')) {
            let class = if slot == "*" {
                EntityClass::from(*CLASSES.choose(rng).expect("non-empty"))
            } else {
                EntityClass::from(slot)
            };
            let pool = &names.by_class[&class];
            let name = &pool[names.sampler.sample(rng)];
            let start = sentence.tokens.len();
            sentence.tokens.extend(name.iter().map(|w| Token::new(w.as_str(), Some("NNP"))));
            let end = sentence.tokens.len();
            sentence.set_span(start, end, &class, LabelSource::Gold, None);
        } else {
            let (word, pos) = piece.rsplit_once('/').expect("word/POS template token");
            sentence
                .tokens
                .push(Token::new(word, Some(pos)).with_label(crate::corpus::Label::O, LabelSource::Gold, None));
        }
    }
    sentence
}

fn make_docs(cfg: &SyntheticConfig, n: usize, prefix: &str, names: &Names, rng: &mut ChaCha8Rng) -> Vec<Document> {
    let mut sentences = Vec::with_capacity(n);
    for id in 0..n {
        let roll: f64 = rng.gen();
        let template = if roll < cfg.cued_share {
            CUED.choose(rng).expect("non-empty").1
        } else if roll < cfg.cued_share + cfg.neutral_share {
            NEUTRAL.choose(rng).expect("non-empty")
        } else {
            EMPTY.choose(rng).expect("non-empty")
        };
        sentences.push(realize(id, template, names, rng));
    }
    sentences
        .chunks(cfg.sentences_per_doc.max(1))
        .enumerate()
        .map(|(d, chunk)| Document::new(format!("{prefix}-{d}"), chunk.to_vec()))
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let names = make_names(cfg, &mut rng);
    let train = make_docs(cfg, cfg.train_sentences, "train", &names, &mut rng);
    let test = make_docs(cfg, cfg.test_sentences, "test", &names, &mut rng);

    let mut freq: BTreeMap<(EntityClass, Vec<String>), u64> = BTreeMap::new();
    for s in train.iter().flat_map(|d| &d.sentences) {
        for span in s.spans() {
            let words = span.surface(s).iter().map(|w| w.to_string()).collect();
            *freq.entry((span.class.clone(), words)).or_default() += 1;
        }
    }
    let mut lexicon = Lexicon::new();
    for class in CLASSES.map(EntityClass::from) {
        let mut ranked: Vec<(&Vec<String>, u64)> =
            freq.iter().filter(|((c, _), _)| *c == class).map(|((_, w), n)| (w, *n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (words, n) in ranked.into_iter().take(cfg.lexicon_size) {
            lexicon.insert(class.clone(), LexiconEntry { surface: words.clone(), frequency: n });
        }
    }

    let word_classes = names
        .by_class
        .iter()
        .flat_map(|(c, ns)| ns.iter().flatten().map(move |w| (w.clone(), c.clone())))
        .collect();
    let stub = VocabStub { word_classes, noise: cfg.stub_noise, seed: cfg.seed, ..VocabStub::default() };
    SyntheticCorpus { train, test, lexicon, stub }
}
