//! HTTP API over the SLP core: corpus ingestion and indexing, labeling
//! sessions, finalize and train.
//!
//! Session life cycle: `open` (queries and verdicts) → `finalized` (label
//! model fitted, marginals available) → `trained` (at least one downstream
//! model evaluated). Each session sits behind its own mutex; long work runs on
//! the blocking pool without holding it.

pub mod api;
mod error;
mod handlers;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use axum::routing::{get, post};
use axum::Router;
use slp_core::{Corpus, Index, Session, SessionOutcome, TestSet, TfidfVectorizer, TrainMode};

pub use error::{ApiError, ApiResult};

use api::{FinalizeCounts, Job, State, TrainResult};

pub const API_VERSION: u32 = 1;
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub addr: String,
    /// Persist corpora, index caches, session exports and models here.
    pub data_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// `SLP_ADDR` and `SLP_DATA_DIR`.
    pub fn from_env() -> Self {
        Self {
            addr: std::env::var("SLP_ADDR").unwrap_or_else(|_| DEFAULT_ADDR.to_owned()),
            data_dir: std::env::var_os("SLP_DATA_DIR").map(PathBuf::from),
        }
    }
}

pub(crate) struct CorpusEntry {
    pub corpus: Arc<Corpus>,
    pub test: Option<Arc<TestSet>>,
    pub n_dropped: usize,
    pub index: RwLock<Option<Arc<Index>>>,
    pub vectorizer: OnceLock<TfidfVectorizer>,
}

impl CorpusEntry {
    fn new(corpus: Corpus, test: Option<TestSet>, n_dropped: usize) -> Self {
        Self {
            corpus: Arc::new(corpus),
            test: test.map(Arc::new),
            n_dropped,
            index: RwLock::new(None),
            vectorizer: OnceLock::new(),
        }
    }

    pub fn index(&self) -> Option<Arc<Index>> {
        self.index.read().expect("index lock").clone()
    }

    pub fn vectorizer(&self) -> slp_core::Result<&TfidfVectorizer> {
        if let Some(v) = self.vectorizer.get() {
            return Ok(v);
        }
        let fitted = TfidfVectorizer::fit(
            self.corpus.utterances().iter().map(|u| u.text.as_str()),
            self.corpus.fingerprint(),
        )?;
        Ok(self.vectorizer.get_or_init(|| fitted))
    }
}

pub(crate) struct SessionEntry {
    pub corpus: Arc<CorpusEntry>,
    pub session: Session,
    pub state: State,
    pub outcome: Option<SessionOutcome>,
    pub counts: Option<FinalizeCounts>,
    pub models: BTreeMap<TrainMode, TrainResult>,
    pub job: Option<Job>,
}

#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

pub(crate) struct Inner {
    pub data_dir: Option<PathBuf>,
    pub corpora: RwLock<HashMap<String, Arc<CorpusEntry>>>,
    pub sessions: RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    next_session: AtomicU64,
}

const TEST_SUFFIX: &str = ".test.csv";

impl AppState {
    /// Loads every corpus previously persisted under `data_dir`.
    pub fn new(data_dir: Option<PathBuf>) -> slp_core::Result<Self> {
        let mut corpora = HashMap::new();
        if let Some(dir) = &data_dir {
            let cdir = corpora_dir(dir);
            if let Ok(entries) = fs::read_dir(&cdir) {
                for e in entries.flatten() {
                    let name = e.file_name().to_string_lossy().into_owned();
                    let Some(id) = name.strip_suffix(".manifest.json") else {
                        continue;
                    };
                    let corpus = Corpus::load(&cdir, id)?;
                    let test_path = cdir.join(format!("{id}{TEST_SUFFIX}"));
                    let test = if test_path.exists() {
                        Some(TestSet::load(&test_path, Some(&corpus))?)
                    } else {
                        None
                    };
                    log::info!("loaded corpus {id} ({} utterances)", corpus.len());
                    corpora.insert(id.to_owned(), Arc::new(CorpusEntry::new(corpus, test, 0)));
                }
            }
        }
        Ok(Self {
            inner: Arc::new(Inner {
                data_dir,
                corpora: RwLock::new(corpora),
                sessions: RwLock::new(HashMap::new()),
                next_session: AtomicU64::new(1),
            }),
        })
    }

    pub(crate) fn corpus(&self, id: &str) -> ApiResult<Arc<CorpusEntry>> {
        self.inner
            .corpora
            .read()
            .expect("corpora lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("corpus", id))
    }

    pub(crate) fn session(&self, id: &str) -> ApiResult<Arc<Mutex<SessionEntry>>> {
        self.inner
            .sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    pub(crate) fn next_session_id(&self) -> String {
        format!("s{}", self.inner.next_session.fetch_add(1, Ordering::Relaxed))
    }
}

// On-disk layout under the data directory, shared with the CLI.

pub fn corpora_dir(data_dir: &Path) -> PathBuf {
    data_dir.join("corpora")
}

pub fn test_path(data_dir: &Path, corpus_id: &str) -> PathBuf {
    corpora_dir(data_dir).join(format!("{corpus_id}{TEST_SUFFIX}"))
}

pub fn index_path(data_dir: &Path, corpus_id: &str) -> PathBuf {
    data_dir.join("index").join(format!("{corpus_id}.idx"))
}

pub fn session_dir(data_dir: &Path, session_id: &str) -> PathBuf {
    data_dir.join("sessions").join(session_id)
}

pub fn router(state: AppState) -> Router {
    use handlers::*;
    Router::new()
        .route("/healthz", get(healthz))
        .route("/corpora", post(ingest))
        .route("/corpora/{id}/index", post(build_index))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/queries", post(issue_query))
        .route("/sessions/{id}/queries/{query_id}/pages/{page}", post(view_page))
        .route("/sessions/{id}/verdicts", post(record_verdict))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/train", post(train))
        .route("/sessions/{id}/export", get(export))
        .fallback(no_route)
        .with_state(state)
}

/// Binds `config.addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config.data_dir.clone()).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(&config.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
