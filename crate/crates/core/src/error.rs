use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the toolkit. Each pipeline stage has its own error
/// enum; this one exists so callers that drive the whole pipeline can use `?`.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Bucket(#[from] BucketError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Harvest(#[from] HarvestError),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("trace is empty or whitespace-only")]
    EmptyTrace,
    #[error("no step markers found and paragraph fallback is disabled")]
    NoMarkers,
    #[error("audit fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("cannot audit an empty trace list")]
    NoTraces,
    #[error("invalid segmentation rules: {0}")]
    InvalidRules(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("trace {example_id}/{teacher_id} has no steps")]
    NoSteps {
        example_id: String,
        teacher_id: String,
    },
    #[error("trace {example_id}/{teacher_id} has zero tokens")]
    NoTokens {
        example_id: String,
        teacher_id: String,
    },
    #[error("cannot aggregate an empty score list")]
    EmptyAggregate,
    #[error("cannot aggregate scores of different (example, teacher) pairs: {0}")]
    MixedIds(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BucketError {
    #[error("invalid bucket spec: {0}")]
    InvalidSpec(String),
    #[error("score for `{0}` has k < 1")]
    InvalidScore(String),
    #[error("example `{0}` has more than one score; aggregate or select a teacher first")]
    DuplicateScore(String),
    #[error("no example record for scored id `{0}`")]
    UnknownExample(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule plan: {0}")]
    InvalidPlan(String),
    #[error("no buckets to schedule")]
    NoBuckets,
    #[error("phase {phase}: bucket {bucket} exhausted ({requested} requested, {available} available)")]
    Exhausted {
        phase: usize,
        bucket: usize,
        requested: usize,
        available: usize,
    },
    #[error("baseline exhausted at phase {phase}: {requested} requested, {available} available")]
    BaselineExhausted {
        phase: usize,
        requested: usize,
        available: usize,
    },
    #[error("missing {signal} for example ids: {}", ids.join(", "))]
    MissingSignal { signal: &'static str, ids: Vec<String> },
    #[error("invalid depth range: min_k {min_k} > max_k {max_k}")]
    EmptyDepthRange { min_k: u32, max_k: u32 },
    #[error("filter needs at least one of min_k / max_k")]
    NoDepthBound,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("need at least two teachers, got {0}")]
    TooFewTeachers(usize),
    #[error("teachers share only {0} examples; at least 3 are needed")]
    InsufficientOverlap(usize),
    #[error("teacher `{teacher}` has more than one score for example `{example}`")]
    DuplicateScore { teacher: String, example: String },
}

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("API key environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("template `{0}`: user text must contain exactly one {{prompt}} placeholder")]
    Template(String),
    #[error("invalid harvest job: {0}")]
    InvalidJob(String),
    #[error("cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
