use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("duplicate utterance id {id} at line {line}")]
    DuplicateId { id: u64, line: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("row {row}: unknown label {token:?} (expected pos or neg)")]
    UnknownLabel { row: usize, token: String },

    #[error("row {row}: duplicate entry for text {text:?} and intent {intent:?}")]
    DuplicateTestEntry {
        row: usize,
        text: String,
        intent: String,
    },

    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("query parse error at position {position}: {message}")]
    QueryParse { position: usize, message: String },

    #[error("nothing to display")]
    NothingToDisplay,

    #[error("unknown query id {0}")]
    UnknownQuery(u32),

    #[error("candidate {candidate} is not eligible for labeling in query {query_id}")]
    IneligibleCandidate { query_id: u32, candidate: u64 },

    #[error("query {0} has no displayed candidates")]
    NoDisplayed(u32),

    #[error("session has no query rounds")]
    NoRounds,

    #[error("session is finalized")]
    SessionFinalized,

    #[error("candidate index {index} out of range for {m} candidates")]
    CandidateOutOfRange { index: usize, m: usize },

    #[error("unknown utterance id {0}")]
    UnknownUtterance(u64),

    #[error("nothing to learn from")]
    NothingToLearn,

    #[error("no labels recorded")]
    NoLabels,

    #[error("non-finite log-likelihood at iteration {0}")]
    NonFiniteLikelihood(usize),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable snake_case identifier for machine-readable error payloads.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "empty_corpus",
            Error::MalformedRecord { .. } => "malformed_record",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::EmptyTestSet => "empty_test_set",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::DuplicateTestEntry { .. } => "duplicate_test_entry",
            Error::MalformedRow { .. } => "malformed_row",
            Error::QueryParse { .. } => "query_parse",
            Error::NothingToDisplay => "nothing_to_display",
            Error::UnknownQuery(_) => "unknown_query",
            Error::IneligibleCandidate { .. } => "ineligible_candidate",
            Error::NoDisplayed(_) => "no_displayed",
            Error::NoRounds => "no_rounds",
            Error::SessionFinalized => "session_finalized",
            Error::CandidateOutOfRange { .. } => "candidate_out_of_range",
            Error::UnknownUtterance(_) => "unknown_utterance",
            Error::NothingToLearn => "nothing_to_learn",
            Error::NoLabels => "no_labels",
            Error::NonFiniteLikelihood(_) => "non_finite_likelihood",
            Error::DegenerateTrainingSet(_) => "degenerate_training_set",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidConfig(_) => "invalid_config",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::Infeasible(_) => "infeasible",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for failures caused by bad input rather than by a bug or the environment.
    pub fn is_validation(&self) -> bool {
        use std::io::ErrorKind;
        match self {
            Error::NonFiniteLikelihood(_) => false,
            Error::Io { source, .. } => matches!(
                source.kind(),
                ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::InvalidData | ErrorKind::InvalidInput
            ),
            _ => true,
        }
    }
}
