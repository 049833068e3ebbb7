use serde::{Deserialize, Serialize};

use super::oracle::OracleLabeler;
use super::synthetic::{IntentSpec, SyntheticData};
use crate::downstream::{ForestParams, Metrics, TfidfVectorizer, TrainedModel, DEFAULT_DECISION_THRESHOLD};
use crate::error::{Error, Result};
use crate::label_model::LabelModelConfig;
use crate::search::Index;
use crate::session::{Mode, Session, SessionConfig, SessionScript, LABEL_ONLY_MIN_LABELS_PER_QUERY};
use crate::workflow::{finalize_and_learn, SessionExports};

/// Action budget standing in for a timed labeling session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub mode: Mode,
    pub max_queries: usize,
    pub max_labels: usize,
    /// Label-only: labels collected per query through pagination.
    pub labels_per_query: usize,
    pub query_script: Vec<String>,
}

pub const SLP_QUERIES: usize = 9;
pub const SLP_LABELS: usize = 79;
pub const LABEL_ONLY_QUERIES: usize = 5;
pub const LABEL_ONLY_LABELS: usize = 77;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetLimits {
    pub max_queries: usize,
    pub max_labels: usize,
    pub labels_per_query: usize,
}

impl BudgetLimits {
    pub const SLP: BudgetLimits = BudgetLimits {
        max_queries: SLP_QUERIES,
        max_labels: SLP_LABELS,
        labels_per_query: LABEL_ONLY_MIN_LABELS_PER_QUERY,
    };
    pub const LABEL_ONLY: BudgetLimits = BudgetLimits {
        max_queries: LABEL_ONLY_QUERIES,
        max_labels: LABEL_ONLY_LABELS,
        labels_per_query: LABEL_ONLY_MIN_LABELS_PER_QUERY,
    };
}

impl Default for BudgetLimits {
    fn default() -> Self {
        Self::SLP
    }
}

impl Budget {
    /// Alternates positive- and negative-seeking queries, starting positive.
    pub fn slp(intent: &IntentSpec, limits: BudgetLimits) -> Budget {
        let mut script = Vec::new();
        let (pos, neg) = (&intent.positive_queries, &intent.negative_queries);
        for i in 0..pos.len().max(neg.len()) {
            script.extend(pos.get(i).cloned());
            script.extend(neg.get(i).cloned());
        }
        script.truncate(limits.max_queries);
        Budget {
            mode: Mode::Slp,
            max_queries: limits.max_queries,
            max_labels: limits.max_labels,
            labels_per_query: limits.labels_per_query,
            query_script: script,
        }
    }

    /// Positive-seeking queries only.
    pub fn label_only(intent: &IntentSpec, limits: BudgetLimits) -> Budget {
        Budget {
            mode: Mode::LabelOnly,
            max_queries: limits.max_queries,
            max_labels: limits.max_labels,
            labels_per_query: limits.labels_per_query,
            query_script: intent.positive_queries.iter().take(limits.max_queries).cloned().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_queries == 0 || self.max_labels == 0 || self.labels_per_query == 0 {
            return Err(Error::InvalidConfig("budgets must be positive".into()));
        }
        if self.query_script.is_empty() {
            return Err(Error::InvalidConfig("query script is empty".into()));
        }
        if self.mode == Mode::LabelOnly && self.labels_per_query < LABEL_ONLY_MIN_LABELS_PER_QUERY {
            return Err(Error::InvalidConfig(format!(
                "label-only runs label at least {LABEL_ONLY_MIN_LABELS_PER_QUERY} per query"
            )));
        }
        Ok(())
    }
}

/// Everything a run needs besides its budget and oracle.
pub struct ExperimentData {
    pub data: SyntheticData,
    pub index: Index,
    pub vectorizer: TfidfVectorizer,
}

impl ExperimentData {
    pub fn new(data: SyntheticData) -> Result<Self> {
        let index = Index::build(&data.corpus);
        let vectorizer = TfidfVectorizer::fit(
            data.corpus.utterances().iter().map(|u| u.text.as_str()),
            data.corpus.fingerprint(),
        )?;
        Ok(Self { data, index, vectorizer })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub session: SessionConfig,
    pub label_model: LabelModelConfig,
    pub forest: ForestParams,
    pub decision_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            session: SessionConfig::default(),
            label_model: LabelModelConfig::default(),
            forest: ForestParams::default(),
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub mode: Mode,
    pub intent: String,
    pub n_queries: usize,
    pub n_labels: usize,
    /// Non-anchor candidates with a marginal (slp only).
    pub n_weak: usize,
    /// Strongly labeled candidates.
    pub n_anchor: usize,
    /// Strong-label classifier; in label-only mode the baseline itself.
    pub strong: Metrics,
    /// Marginal regressor (slp only).
    pub weak: Option<Metrics>,
    /// No positive label was obtained.
    pub degenerate: bool,
    pub script: SessionScript,
    pub marginals_csv: Option<String>,
}

/// Drives one oracle session under the budget, then trains and evaluates.
pub fn run_experiment(
    ctx: &ExperimentData,
    intent: &str,
    budget: &Budget,
    oracle: &OracleLabeler,
    config: &RunConfig,
) -> Result<RunOutcome> {
    budget.validate()?;
    let corpus = &ctx.data.corpus;
    let session_cfg = SessionConfig {
        mode: budget.mode,
        ..config.session
    };
    let mut session = Session::new(intent, corpus.corpus_id(), corpus.fingerprint(), session_cfg)?;
    let mut n_labels = 0;
    let mut n_queries = 0;
    for q in budget.query_script.iter().take(budget.max_queries) {
        if n_labels >= budget.max_labels {
            break;
        }
        let qid = session.issue_query(&ctx.index, q)?;
        n_queries += 1;
        match budget.mode {
            Mode::Slp => {
                for id in session.round(qid)?.displayed.clone() {
                    if n_labels >= budget.max_labels {
                        break;
                    }
                    if session.record_verdict(qid, id, oracle.label(id))? {
                        n_labels += 1;
                    }
                }
            }
            Mode::LabelOnly => {
                let mut this_query = 0;
                let mut page = 1;
                let pages = session.round(qid)?.neighborhood.len().div_ceil(session_cfg.page_size);
                while page <= pages && this_query < budget.labels_per_query && n_labels < budget.max_labels {
                    for id in session.view_page(qid, page)? {
                        if this_query >= budget.labels_per_query || n_labels >= budget.max_labels {
                            break;
                        }
                        // already judged under an earlier query
                        if session.strong_labels().contains_key(&id) {
                            continue;
                        }
                        if session.record_verdict(qid, id, oracle.label(id))? {
                            this_query += 1;
                            n_labels += 1;
                        }
                    }
                    page += 1;
                }
            }
        }
    }

    let outcome = finalize_and_learn(&mut session, corpus, &config.label_model);
    let outcome = match outcome {
        Ok(o) => Some(o),
        Err(Error::NothingToLearn) => None,
        Err(e) => return Err(e),
    };
    let strong = session.strong_labels();
    let degenerate = !strong.values().any(|&l| l > 0);

    let intent_name = intent.to_owned();
    let fallback = |n_train: usize| {
        let score = if strong.is_empty() || degenerate { 0.0 } else { 1.0 };
        TrainedModel::constant(&intent_name, ctx.vectorizer.clone(), score, n_train)
    };
    let strong_model = match TrainedModel::strong(intent, ctx.vectorizer.clone(), corpus, &strong, &config.forest) {
        Ok(m) => m,
        Err(Error::DegenerateTrainingSet(_) | Error::EmptyInput(_)) => fallback(strong.len()),
        Err(e) => return Err(e),
    };
    let strong_metrics = strong_model.evaluate(&ctx.data.test, config.decision_threshold)?;

    let (weak, marginals_csv, n_weak) = match (&outcome, budget.mode) {
        (Some(o), Mode::Slp) => {
            let records = o.marginal_records(corpus);
            let model = match TrainedModel::weak(intent, ctx.vectorizer.clone(), corpus, &records, &config.forest) {
                Ok(m) => m,
                Err(Error::EmptyInput(_)) => fallback(0),
                Err(e) => return Err(e),
            };
            let exports = SessionExports::new(&session, o, corpus);
            (
                Some(model.evaluate(&ctx.data.test, config.decision_threshold)?),
                exports.marginals,
                o.n_weak(),
            )
        }
        (None, Mode::Slp) => (Some(fallback(0).evaluate(&ctx.data.test, config.decision_threshold)?), None, 0),
        (_, Mode::LabelOnly) => (None, None, 0),
    };

    Ok(RunOutcome {
        mode: budget.mode,
        intent: intent.to_owned(),
        n_queries,
        n_labels,
        n_weak,
        n_anchor: strong.len(),
        strong: strong_metrics,
        weak,
        degenerate,
        script: session.script(),
        marginals_csv,
    })
}
