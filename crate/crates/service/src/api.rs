//! Request and response payloads. Every response carries `v`; requests may
//! omit it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use slp_core::downstream::ForestParams;
use slp_core::session::{Decision, Mode, SessionConfig, Verdict};
use slp_core::{Metrics, RawRecord, TestRow, TrainMode};

#[derive(Debug, Deserialize)]
pub struct IngestRequest {
    pub v: Option<u32>,
    pub corpus_id: String,
    pub records: Vec<RawRecord>,
    pub max_chars: Option<usize>,
    /// Labeled test rows used by `train` when the request brings none.
    pub test: Option<Vec<TestRow>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub v: u32,
    pub corpus_id: String,
    pub fingerprint: String,
    pub n_utterances: usize,
    pub n_dropped: usize,
    pub n_test: usize,
    pub indexed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IndexInfo {
    pub v: u32,
    pub corpus_id: String,
    pub fingerprint: String,
    pub n_docs: usize,
    pub vocabulary_size: usize,
    /// Loaded from the on-disk cache rather than built.
    pub cached: bool,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub v: Option<u32>,
    pub corpus_id: String,
    pub intent: String,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum State {
    Open,
    Finalized,
    Trained,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub v: u32,
    pub session_id: String,
    pub state: State,
}

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub v: Option<u32>,
    pub q: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub text: String,
    pub score: f64,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    pub v: u32,
    pub query_id: u32,
    pub neighborhood_size: usize,
    /// The tier sample in slp mode; the first page in label-only mode.
    pub displayed: Vec<Candidate>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PageResponse {
    pub v: u32,
    pub query_id: u32,
    pub page: usize,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Deserialize)]
pub struct VerdictRequest {
    pub v: Option<u32>,
    pub query_id: u32,
    pub candidate_id: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictResponse {
    pub v: u32,
    /// False when the same verdict was already stored.
    pub recorded: bool,
    pub n_labels: usize,
    pub n_strong: usize,
    pub round: RoundSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundSummary {
    pub query_id: u32,
    pub q: String,
    pub neighborhood_size: usize,
    pub k_in: usize,
    pub k_out: usize,
    pub decision: Decision,
    pub n_covered: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundView {
    #[serde(flatten)]
    pub summary: RoundSummary,
    pub displayed: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FinalizeCounts {
    pub n_functions: usize,
    pub n_strong: usize,
    pub n_weak: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub v: u32,
    pub state: State,
    #[serde(flatten)]
    pub counts: FinalizeCounts,
}

#[derive(Debug, Default, Deserialize)]
pub struct TrainRequest {
    pub v: Option<u32>,
    pub mode: Option<TrainMode>,
    pub test: Option<Vec<TestRow>>,
    pub threshold: Option<f64>,
    pub forest: Option<ForestParams>,
    /// `false` answers 202 at once; poll `GET /sessions/{id}`.
    pub wait: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainResult {
    pub mode: TrainMode,
    pub model_kind: String,
    pub n_train: usize,
    pub threshold: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainResponse {
    pub v: u32,
    pub state: State,
    #[serde(flatten)]
    pub result: TrainResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub mode: TrainMode,
    pub status: JobStatus,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub v: u32,
    pub session_id: String,
    pub job: Job,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub v: u32,
    pub session_id: String,
    pub state: State,
    pub intent: String,
    pub corpus_id: String,
    pub mode: Mode,
    pub config: SessionConfig,
    pub n_queries: usize,
    pub n_labels: usize,
    pub n_strong: usize,
    pub rounds: Vec<RoundView>,
    pub finalized: Option<FinalizeCounts>,
    pub models: BTreeMap<TrainMode, TrainResult>,
    pub job: Option<Job>,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    pub what: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub v: u32,
    pub status: String,
}
