//! Weakly supervised named-entity recognition from a small seed lexicon and
//! unlabeled text.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod mlm;
pub mod rules;
pub mod selftrain;
pub mod span_detector;
pub mod synthetic;
pub mod tagger;
pub mod window_filter;
pub mod wire;

pub use error::{Error, Result};
