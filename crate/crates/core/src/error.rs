use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: invalid BIO transition, {label} follows {previous}")]
    InvalidBio {
        line: usize,
        previous: String,
        label: String,
    },

    #[error("invalid label `{0}`")]
    InvalidLabel(String),

    #[error("overlapping spans [{0}, {1}) and [{2}, {3})")]
    OverlappingSpans(usize, usize, usize, usize),

    #[error("span [{start}, {end}) out of bounds for length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("corpus has no part-of-speech tags (document {doc}, sentence {sentence})")]
    MissingPos { doc: String, sentence: usize },

    #[error("ambiguous lexicon, surface forms under several classes: {}", .0.join(", "))]
    AmbiguousLexicon(Vec<String>),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tagger error: {0}")]
    Tagger(String),

    #[error("class set mismatch: model has [{}], pipeline expects [{}]", .model.join(", "), .expected.join(", "))]
    ClassMismatch {
        model: Vec<String>,
        expected: Vec<String>,
    },

    #[error("corpora are misaligned at {0}")]
    Misaligned(String),

    #[error("no mapping for label `{0}`")]
    UnmappedLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("iteration {iteration} ({stage}): {source}")]
    Iteration {
        iteration: usize,
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
