use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State as Shared};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use slp_core::corpus::DEFAULT_MAX_CHARS;
use slp_core::downstream::{ForestParams, DEFAULT_DECISION_THRESHOLD};
use slp_core::label_model::strong_labels_csv;
use slp_core::search::load_or_build;
use slp_core::session::Mode;
use slp_core::{finalize_and_learn, Corpus, Index, Session, SessionExports, TestSet, TrainMode, TrainedModel};

use crate::api::*;
use crate::{
    corpora_dir, index_path, session_dir, test_path, ApiError, ApiResult, AppState, CorpusEntry, SessionEntry,
    API_VERSION,
};

type Body<T> = Result<Json<T>, JsonRejection>;

fn check_v(v: Option<u32>) -> ApiResult<()> {
    match v {
        Some(v) if v != API_VERSION => Err(ApiError::invalid(
            "unsupported_version",
            format!("payload version {v} is not supported (expected {API_VERSION})"),
        )),
        _ => Ok(()),
    }
}

fn valid_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ApiError::invalid(
            "invalid_id",
            format!("corpus id {id:?} must be 1-128 characters of [A-Za-z0-9._-]"),
        ))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn lock(entry: &Mutex<SessionEntry>) -> std::sync::MutexGuard<'_, SessionEntry> {
    // a panicking handler must not wedge the session for good
    entry.lock().unwrap_or_else(|p| p.into_inner())
}

pub async fn healthz() -> Json<Health> {
    Json(Health {
        v: API_VERSION,
        status: "ok".into(),
    })
}

pub async fn no_route() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no_route", "no such route")
}

fn corpus_info(id: &str, e: &CorpusEntry) -> CorpusInfo {
    CorpusInfo {
        v: API_VERSION,
        corpus_id: id.to_owned(),
        fingerprint: e.corpus.fingerprint().to_owned(),
        n_utterances: e.corpus.len(),
        n_dropped: e.n_dropped,
        n_test: e.test.as_ref().map_or(0, |t| t.entries.len()),
        indexed: e.index().is_some(),
    }
}

pub async fn ingest(Shared(state): Shared<AppState>, body: Body<IngestRequest>) -> ApiResult<Response> {
    let Json(req) = body?;
    check_v(req.v)?;
    valid_id(&req.corpus_id)?;
    let data_dir = state.inner.data_dir.clone();
    let id = req.corpus_id.clone();
    let (corpus, test, dropped) = blocking(move || {
        let (corpus, report) = Corpus::ingest(&req.corpus_id, req.records, req.max_chars.unwrap_or(DEFAULT_MAX_CHARS))?;
        let test = req.test.map(|rows| TestSet::from_rows(rows, 1, Some(&corpus))).transpose()?;
        Ok((corpus, test, report.dropped))
    })
    .await?;

    {
        let corpora = state.inner.corpora.read().expect("corpora lock");
        if let Some(existing) = corpora.get(&id) {
            if existing.corpus.fingerprint() == corpus.fingerprint() {
                return Ok((StatusCode::OK, Json(corpus_info(&id, existing))).into_response());
            }
            return Err(ApiError::conflict(
                "corpus_exists",
                format!("corpus {id:?} already exists with different content"),
            ));
        }
    }
    if let Some(dir) = &data_dir {
        corpus.save(&corpora_dir(dir))?;
        if let Some(t) = &test {
            let path = test_path(dir, &id);
            std::fs::write(&path, t.to_csv()?).map_err(|e| ApiError::from(slp_core::Error::Io { path, source: e }))?;
        }
    }
    let entry = Arc::new(CorpusEntry::new(corpus, test, dropped));
    let info = corpus_info(&id, &entry);
    let mut corpora = state.inner.corpora.write().expect("corpora lock");
    // lost a race against an identical upload: keep the first
    if corpora.contains_key(&id) {
        return Ok((StatusCode::OK, Json(corpus_info(&id, &corpora[&id]))).into_response());
    }
    corpora.insert(id, entry);
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

pub async fn build_index(Shared(state): Shared<AppState>, Path(id): Path<String>) -> ApiResult<Json<IndexInfo>> {
    let entry = state.corpus(&id)?;
    let (index, cached) = match entry.index() {
        Some(ix) => (ix, true),
        None => {
            let data_dir = state.inner.data_dir.clone();
            let e = entry.clone();
            let cid = id.clone();
            let (ix, cached) = blocking(move || match data_dir {
                Some(dir) => Ok(load_or_build(&index_path(&dir, &cid), &e.corpus)?),
                None => Ok((Index::build(&e.corpus), false)),
            })
            .await?;
            let ix = Arc::new(ix);
            let mut slot = entry.index.write().expect("index lock");
            (slot.get_or_insert(ix).clone(), cached)
        }
    };
    Ok(Json(IndexInfo {
        v: API_VERSION,
        corpus_id: id,
        fingerprint: index.fingerprint().to_owned(),
        n_docs: index.n_docs(),
        vocabulary_size: index.vocabulary_size(),
        cached,
    }))
}

pub async fn create_session(Shared(state): Shared<AppState>, body: Body<CreateSession>) -> ApiResult<Response> {
    let Json(req) = body?;
    check_v(req.v)?;
    let corpus = state.corpus(&req.corpus_id)?;
    if corpus.index().is_none() {
        return Err(ApiError::conflict(
            "corpus_not_indexed",
            format!("corpus {:?} has no index; POST /corpora/{}/index first", req.corpus_id, req.corpus_id),
        ));
    }
    if req.intent.trim().is_empty() {
        return Err(ApiError::invalid("invalid_intent", "intent must not be empty"));
    }
    let session = Session::new(req.intent.trim(), &req.corpus_id, corpus.corpus.fingerprint(), req.config)?;
    let id = state.next_session_id();
    let entry = SessionEntry {
        corpus,
        session,
        state: State::Open,
        outcome: None,
        counts: None,
        models: Default::default(),
        job: None,
    };
    state
        .inner
        .sessions
        .write()
        .expect("sessions lock")
        .insert(id.clone(), Arc::new(Mutex::new(entry)));
    Ok((
        StatusCode::CREATED,
        Json(Created {
            v: API_VERSION,
            session_id: id,
            state: State::Open,
        }),
    )
        .into_response())
}

fn ensure_open(e: &SessionEntry) -> ApiResult<()> {
    if e.state == State::Open {
        Ok(())
    } else {
        Err(ApiError::conflict("session_not_open", "session is finalized; no more queries or verdicts"))
    }
}

fn candidates(e: &SessionEntry, query_id: u32, ids: &[u64]) -> ApiResult<Vec<Candidate>> {
    let round = e.session.round(query_id)?;
    Ok(ids
        .iter()
        .map(|&id| Candidate {
            id,
            text: e.corpus.corpus.text(id).unwrap_or_default().to_owned(),
            score: round.neighborhood.hits.iter().find(|h| h.utterance_id == id).map_or(0.0, |h| h.score),
            verdict: round.verdicts.get(&id).copied(),
        })
        .collect())
}

fn summary(e: &SessionEntry, query_id: u32) -> ApiResult<RoundSummary> {
    let round = e.session.round(query_id)?;
    let outcome = e.session.outcome(query_id)?;
    Ok(RoundSummary {
        query_id,
        q: round.raw_query.clone(),
        neighborhood_size: round.neighborhood.len(),
        k_in: round.k_in(),
        k_out: round.k_out(),
        decision: outcome.decision,
        n_covered: outcome.covered.len(),
    })
}

pub async fn issue_query(
    Shared(state): Shared<AppState>,
    Path(id): Path<String>,
    body: Body<QueryRequest>,
) -> ApiResult<Json<QueryResponse>> {
    let Json(req) = body?;
    check_v(req.v)?;
    let entry = state.session(&id)?;
    let mut e = lock(&entry);
    ensure_open(&e)?;
    let index = e.corpus.index().ok_or_else(|| ApiError::conflict("corpus_not_indexed", "corpus index was dropped"))?;
    let query_id = e.session.issue_query(&index, &req.q)?;
    let hood = e.session.round(query_id)?.neighborhood.len();
    let shown = match e.session.config.mode {
        Mode::Slp => e.session.round(query_id)?.displayed.clone(),
        Mode::LabelOnly if hood > 0 => e.session.view_page(query_id, 1)?,
        Mode::LabelOnly => Vec::new(),
    };
    Ok(Json(QueryResponse {
        v: API_VERSION,
        query_id,
        neighborhood_size: hood,
        displayed: candidates(&e, query_id, &shown)?,
    }))
}

pub async fn view_page(
    Shared(state): Shared<AppState>,
    Path((id, query_id, page)): Path<(String, u32, usize)>,
) -> ApiResult<Json<PageResponse>> {
    let entry = state.session(&id)?;
    let mut e = lock(&entry);
    ensure_open(&e)?;
    let ids = e.session.view_page(query_id, page)?;
    Ok(Json(PageResponse {
        v: API_VERSION,
        query_id,
        page,
        candidates: candidates(&e, query_id, &ids)?,
    }))
}

pub async fn record_verdict(
    Shared(state): Shared<AppState>,
    Path(id): Path<String>,
    body: Body<VerdictRequest>,
) -> ApiResult<Json<VerdictResponse>> {
    let Json(req) = body?;
    check_v(req.v)?;
    let entry = state.session(&id)?;
    let mut e = lock(&entry);
    ensure_open(&e)?;
    let recorded = e.session.record_verdict(req.query_id, req.candidate_id, req.verdict)?;
    Ok(Json(VerdictResponse {
        v: API_VERSION,
        recorded,
        n_labels: e.session.labeled_count(),
        n_strong: e.session.strong_labels().len(),
        round: summary(&e, req.query_id)?,
    }))
}

pub async fn finalize(Shared(state): Shared<AppState>, Path(id): Path<String>) -> ApiResult<Json<FinalizeResponse>> {
    let entry = state.session(&id)?;
    let data_dir = state.inner.data_dir.clone();
    let sid = id.clone();
    let counts = blocking(move || {
        let mut e = lock(&entry);
        if e.state != State::Open {
            return Err(ApiError::conflict("already_finalized", "session is already finalized"));
        }
        let corpus = e.corpus.corpus.clone();
        let outcome = finalize_and_learn(&mut e.session, &corpus, &Default::default())?;
        if let Some(dir) = data_dir {
            SessionExports::new(&e.session, &outcome, &corpus).write(&session_dir(&dir, &sid))?;
        }
        let counts = FinalizeCounts {
            n_functions: outcome.finalized.functions.len(),
            n_strong: outcome.n_anchor(),
            n_weak: outcome.n_weak(),
        };
        e.outcome = Some(outcome);
        e.counts = Some(counts);
        e.state = State::Finalized;
        Ok(counts)
    })
    .await?;
    Ok(Json(FinalizeResponse {
        v: API_VERSION,
        state: State::Finalized,
        counts,
    }))
}

struct TrainJob {
    mode: TrainMode,
    corpus: Arc<CorpusEntry>,
    intent: String,
    strong: std::collections::BTreeMap<u64, i8>,
    marginals: Vec<slp_core::MarginalRecord>,
    test: Arc<TestSet>,
    threshold: f64,
    forest: ForestParams,
}

impl TrainJob {
    fn run(self) -> slp_core::Result<(TrainedModel, TrainResult)> {
        let corpus = &self.corpus.corpus;
        let vectorizer = self.corpus.vectorizer()?.clone();
        let model = match self.mode {
            TrainMode::Strong => TrainedModel::strong(&self.intent, vectorizer, corpus, &self.strong, &self.forest)?,
            TrainMode::Weak => TrainedModel::weak(&self.intent, vectorizer, corpus, &self.marginals, &self.forest)?,
        };
        let metrics = model.evaluate(&self.test, self.threshold)?;
        let result = TrainResult {
            mode: self.mode,
            model_kind: model.predictor.kind().to_owned(),
            n_train: model.n_train,
            threshold: self.threshold,
            metrics,
        };
        Ok((model, result))
    }
}

fn finish(entry: &Mutex<SessionEntry>, data_dir: Option<&std::path::Path>, sid: &str, res: slp_core::Result<(TrainedModel, TrainResult)>) -> ApiResult<TrainResult> {
    let mut e = lock(entry);
    let mode = e.job.as_ref().map(|j| j.mode);
    let out = res.map_err(ApiError::from).and_then(|(model, result)| {
        if let Some(dir) = data_dir {
            let d = session_dir(dir, sid);
            std::fs::create_dir_all(&d).map_err(|source| slp_core::Error::Io { path: d.clone(), source })?;
            model.save(&d.join(format!("model-{}.json", result.mode.as_str())))?;
        }
        Ok(result)
    });
    match &out {
        Ok(result) => {
            e.models.insert(result.mode, result.clone());
            e.state = State::Trained;
        }
        Err(err) => log::warn!("training {sid} failed: {}", err.message),
    }
    if let Some(mode) = mode {
        e.job = Some(Job {
            mode,
            status: if out.is_ok() { JobStatus::Done } else { JobStatus::Failed },
            error: out.as_ref().err().map(|e| e.message.clone()),
        });
    }
    out
}

pub async fn train(Shared(state): Shared<AppState>, Path(id): Path<String>, body: Body<TrainRequest>) -> ApiResult<Response> {
    let Json(req) = body?;
    check_v(req.v)?;
    let mode = req.mode.ok_or_else(|| ApiError::invalid("missing_mode", "mode must be \"strong\" or \"weak\""))?;
    let entry = state.session(&id)?;
    let job = {
        let mut e = lock(&entry);
        if e.state == State::Open {
            return Err(ApiError::conflict("session_not_finalized", "finalize the session before training"));
        }
        if e.job.as_ref().is_some_and(|j| j.status == JobStatus::Running) {
            return Err(ApiError::conflict("training_in_progress", "a training job is already running"));
        }
        let outcome = e.outcome.as_ref().expect("finalized sessions keep their outcome");
        if mode == TrainMode::Weak && outcome.learned.is_none() {
            return Err(ApiError::invalid("no_marginals", "label-only sessions have no marginals to train on"));
        }
        let test = match req.test {
            Some(rows) => Arc::new(TestSet::from_rows(rows, 1, Some(&e.corpus.corpus))?),
            None => e
                .corpus
                .test
                .clone()
                .ok_or_else(|| ApiError::invalid("no_test_set", "no test rows in the request or on the corpus"))?,
        };
        let threshold = req.threshold.unwrap_or(DEFAULT_DECISION_THRESHOLD);
        let forest = req.forest.unwrap_or_default();
        forest.validate()?;
        let job = TrainJob {
            mode,
            corpus: e.corpus.clone(),
            intent: e.session.intent.clone(),
            strong: outcome.finalized.strong.clone(),
            marginals: outcome.marginal_records(&e.corpus.corpus),
            test,
            threshold,
            forest,
        };
        e.job = Some(Job {
            mode,
            status: JobStatus::Running,
            error: None,
        });
        job
    };

    let data_dir = state.inner.data_dir.clone();
    let sid = id.clone();
    let worker = entry.clone();
    let handle = tokio::task::spawn_blocking(move || {
        let res = job.run();
        finish(&worker, data_dir.as_deref(), &sid, res)
    });
    if req.wait == Some(false) {
        return Ok((
            StatusCode::ACCEPTED,
            Json(Accepted {
                v: API_VERSION,
                session_id: id,
                job: Job {
                    mode,
                    status: JobStatus::Running,
                    error: None,
                },
            }),
        )
            .into_response());
    }
    let result = handle
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(TrainResponse {
        v: API_VERSION,
        state: State::Trained,
        result,
    })
    .into_response())
}

pub async fn get_session(Shared(state): Shared<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let entry = state.session(&id)?;
    let e = lock(&entry);
    let s = &e.session;
    let rounds = s
        .rounds
        .iter()
        .map(|r| {
            Ok(RoundView {
                summary: summary(&e, r.query_id)?,
                displayed: candidates(&e, r.query_id, &r.displayed)?,
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(Json(SessionView {
        v: API_VERSION,
        session_id: id,
        state: e.state,
        intent: s.intent.clone(),
        corpus_id: s.corpus_id.clone(),
        mode: s.config.mode,
        config: s.config,
        n_queries: s.rounds.len(),
        n_labels: s.labeled_count(),
        n_strong: s.strong_labels().len(),
        rounds,
        finalized: e.counts,
        models: e.models.clone(),
        job: e.job.clone(),
    }))
}

pub async fn export(
    Shared(state): Shared<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let entry = state.session(&id)?;
    let e = lock(&entry);
    let (body, content_type) = match q.what.as_str() {
        "script" => (e.session.script().to_jsonl(), "application/x-ndjson"),
        "labels" => (strong_labels_csv(&e.session.strong_labels()), "text/csv"),
        "marginals" => {
            let outcome = e
                .outcome
                .as_ref()
                .ok_or_else(|| ApiError::conflict("session_not_finalized", "marginals exist after finalize"))?;
            let exports = SessionExports::new(&e.session, outcome, &e.corpus.corpus);
            let m = exports
                .marginals
                .ok_or_else(|| ApiError::invalid("no_marginals", "label-only sessions have no marginals"))?;
            (m, "text/csv")
        }
        other => {
            return Err(ApiError::invalid(
                "invalid_export",
                format!("unknown export {other:?}; use marginals, labels or script"),
            ))
        }
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}
