//! Per-intent labeling sessions.
//!
//! A session issues queries against an index, shows a tier-sampled subset of
//! each neighborhood (or paginated lists in label-only mode), records In/Out/
//! Abstain verdicts and decides per round whether the displayed majority is
//! propagated to the rest of the neighborhood. Every successful mutation is
//! appended to the session script so the session can be replayed exactly.

mod sampling;
mod script;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use sampling::{paginate, sample_display, tier_of, tier_quotas, tier_sizes};
pub use script::{Action, ScriptHeader, SessionScript, SCRIPT_VERSION};

use crate::error::{Error, Result};
use crate::search::{parse_query, Bm25Params, Index, Neighborhood};

pub const DEFAULT_DISPLAY: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const DEFAULT_PAGE_SIZE: usize = 10;
/// Minimum labels per query suggested to label-only users.
pub const LABEL_ONLY_MIN_LABELS_PER_QUERY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    In,
    Out,
    Abstain,
}

impl Verdict {
    /// +1 / -1, or `None` for an abstention.
    pub fn label(self) -> Option<i8> {
        match self {
            Verdict::In => Some(1),
            Verdict::Out => Some(-1),
            Verdict::Abstain => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Slp,
    LabelOnly,
}

/// How a displayed-vote ratio is compared with the propagation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    #[default]
    AtLeast,
    Above,
}

impl ThresholdRule {
    fn passes(self, ratio: f64, threshold: f64) -> bool {
        match self {
            ThresholdRule::AtLeast => ratio >= threshold,
            ThresholdRule::Above => ratio > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    /// Neighborhood size.
    pub n: usize,
    /// Candidates displayed per round in slp mode.
    pub k: usize,
    /// Propagation threshold on k_in/k and k_out/k.
    pub threshold: f64,
    pub threshold_rule: ThresholdRule,
    pub mode: Mode,
    pub page_size: usize,
    pub rng_seed: u64,
    pub bm25: Bm25Params,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n: crate::search::DEFAULT_NEIGHBORHOOD,
            k: DEFAULT_DISPLAY,
            threshold: DEFAULT_THRESHOLD,
            threshold_rule: ThresholdRule::AtLeast,
            mode: Mode::Slp,
            page_size: DEFAULT_PAGE_SIZE,
            rng_seed: 0,
            bm25: Bm25Params::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::InvalidConfig("n and k must be positive".into()));
        }
        if self.k > self.n {
            return Err(Error::InvalidConfig(format!(
                "k ({}) must not exceed n ({})",
                self.k, self.n
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if self.page_size == 0 {
            return Err(Error::InvalidConfig("page_size must be positive".into()));
        }
        Bm25Params::new(self.bm25.k1(), self.bm25.b(), self.bm25.n_default())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    PropagateIn,
    PropagateOut,
    NoPropagation,
}

impl Decision {
    pub fn label(self) -> Option<i8> {
        match self {
            Decision::PropagateIn => Some(1),
            Decision::PropagateOut => Some(-1),
            Decision::NoPropagation => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub decision: Decision,
    /// Neighborhood members without an In/Out verdict in this round; empty
    /// when nothing is propagated.
    pub covered: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRound {
    pub query_id: u32,
    pub raw_query: String,
    pub neighborhood: Neighborhood,
    pub displayed: Vec<u64>,
    pub verdicts: BTreeMap<u64, Verdict>,
}

impl QueryRound {
    pub fn k_in(&self) -> usize {
        self.verdicts.values().filter(|v| **v == Verdict::In).count()
    }

    pub fn k_out(&self) -> usize {
        self.verdicts.values().filter(|v| **v == Verdict::Out).count()
    }
}

/// Thresholded majority vote over the displayed sample. The denominator is
/// the number of displayed candidates, abstentions included.
pub fn propagate(round: &QueryRound, threshold: f64, rule: ThresholdRule) -> Result<PropagationOutcome> {
    let k = round.displayed.len();
    if k == 0 {
        return Err(Error::NoDisplayed(round.query_id));
    }
    let k_in = round.k_in() as f64 / k as f64;
    let k_out = round.k_out() as f64 / k as f64;
    let decision = if rule.passes(k_in, threshold) {
        Decision::PropagateIn
    } else if rule.passes(k_out, threshold) {
        Decision::PropagateOut
    } else {
        Decision::NoPropagation
    };
    let covered = if decision == Decision::NoPropagation {
        Vec::new()
    } else {
        round
            .neighborhood
            .ids()
            .filter(|id| {
                round
                    .verdicts
                    .get(id)
                    .and_then(|v| v.label())
                    .is_none()
            })
            .collect()
    };
    Ok(PropagationOutcome { decision, covered })
}

/// One passed neighborhood, used as a weak labeling function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelingFunction {
    pub query_id: u32,
    pub label: i8,
    pub covered: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizedLabels {
    pub strong: BTreeMap<u64, i8>,
    pub functions: Vec<LabelingFunction>,
}

impl FinalizedLabels {
    pub fn n_weak(&self) -> usize {
        self.functions.iter().map(|f| f.covered.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub intent: String,
    pub corpus_id: String,
    pub corpus_fingerprint: String,
    pub config: SessionConfig,
    pub rounds: Vec<QueryRound>,
    /// Non-abstain and abstain verdicts in the order they were recorded.
    label_log: Vec<(u64, Verdict)>,
    finalized: bool,
    actions: Vec<Action>,
}

impl Session {
    pub fn new(intent: &str, corpus_id: &str, corpus_fingerprint: &str, config: SessionConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            intent: intent.to_string(),
            corpus_id: corpus_id.to_string(),
            corpus_fingerprint: corpus_fingerprint.to_string(),
            config,
            rounds: Vec::new(),
            label_log: Vec::new(),
            finalized: false,
            actions: Vec::new(),
        })
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    fn ensure_open(&self) -> Result<()> {
        if self.finalized {
            Err(Error::SessionFinalized)
        } else {
            Ok(())
        }
    }

    pub fn round(&self, query_id: u32) -> Result<&QueryRound> {
        self.rounds
            .get(query_id as usize)
            .ok_or(Error::UnknownQuery(query_id))
    }

    fn check_index(&self, index: &Index) -> Result<()> {
        if index.fingerprint() != self.corpus_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.corpus_fingerprint.clone(),
                found: index.fingerprint().to_string(),
            });
        }
        Ok(())
    }

    /// Runs a query and opens a new round. In slp mode the displayed sample is
    /// drawn from a per-round RNG stream so replays do not depend on other
    /// actions; in label-only mode nothing is displayed until a page is viewed.
    pub fn issue_query(&mut self, index: &Index, raw: &str) -> Result<u32> {
        self.ensure_open()?;
        self.check_index(index)?;
        let ast = parse_query(raw)?;
        let neighborhood = index.search(&self.config.bm25, &ast, self.config.n);
        let query_id = self.rounds.len() as u32;
        let displayed = match self.config.mode {
            Mode::Slp if neighborhood.is_empty() => Vec::new(),
            Mode::Slp => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
                rng.set_stream(query_id as u64);
                sample_display(&neighborhood, self.config.k, &mut rng)?
            }
            Mode::LabelOnly => Vec::new(),
        };
        self.rounds.push(QueryRound {
            query_id,
            raw_query: raw.to_string(),
            neighborhood,
            displayed,
            verdicts: BTreeMap::new(),
        });
        self.actions.push(Action::Query { q: raw.to_string() });
        Ok(query_id)
    }

    /// Label-only mode: shows one page of the neighborhood and marks it displayed.
    pub fn view_page(&mut self, query_id: u32, page: usize) -> Result<Vec<u64>> {
        self.ensure_open()?;
        if self.config.mode != Mode::LabelOnly {
            return Err(Error::InvalidConfig("pagination is only available in label_only mode".into()));
        }
        let page_size = self.config.page_size;
        let round = self
            .rounds
            .get_mut(query_id as usize)
            .ok_or(Error::UnknownQuery(query_id))?;
        let ids = paginate(&round.neighborhood, page, page_size)?;
        for id in &ids {
            if !round.displayed.contains(id) {
                round.displayed.push(*id);
            }
        }
        // keep displayed in score order
        let order: BTreeMap<u64, usize> = round
            .neighborhood
            .ids()
            .enumerate()
            .map(|(rank, id)| (id, rank))
            .collect();
        round.displayed.sort_by_key(|id| order[id]);
        self.actions.push(Action::Page { query_id, page });
        Ok(ids)
    }

    /// Records a verdict. Returns `false` when the identical verdict was
    /// already stored for that round (a no-op).
    pub fn record_verdict(&mut self, query_id: u32, candidate: u64, verdict: Verdict) -> Result<bool> {
        self.ensure_open()?;
        let mode = self.config.mode;
        let round = self
            .rounds
            .get_mut(query_id as usize)
            .ok_or(Error::UnknownQuery(query_id))?;
        let eligible = match mode {
            Mode::Slp => round.displayed.contains(&candidate),
            Mode::LabelOnly => round.neighborhood.contains(candidate),
        };
        if !eligible {
            return Err(Error::IneligibleCandidate { query_id, candidate });
        }
        if round.verdicts.get(&candidate) == Some(&verdict) {
            return Ok(false);
        }
        round.verdicts.insert(candidate, verdict);
        self.label_log.push((candidate, verdict));
        self.actions.push(Action::Verdict {
            query_id,
            candidate_id: candidate,
            verdict,
        });
        Ok(true)
    }

    /// Latest non-abstain verdict per candidate, as +1/-1.
    pub fn strong_labels(&self) -> BTreeMap<u64, i8> {
        let mut labels = BTreeMap::new();
        for (c, v) in &self.label_log {
            if let Some(l) = v.label() {
                labels.insert(*c, l);
            }
        }
        labels
    }

    pub fn outcome(&self, query_id: u32) -> Result<PropagationOutcome> {
        let round = self.round(query_id)?;
        if self.config.mode == Mode::LabelOnly || round.displayed.is_empty() {
            return Ok(PropagationOutcome {
                decision: Decision::NoPropagation,
                covered: Vec::new(),
            });
        }
        propagate(round, self.config.threshold, self.config.threshold_rule)
    }

    pub fn labeled_count(&self) -> usize {
        self.label_log.len()
    }

    /// Emits one labeling function per propagating round plus the strong
    /// labels, and closes the session to further edits.
    pub fn finalize(&mut self) -> Result<FinalizedLabels> {
        if self.rounds.is_empty() {
            return Err(Error::NoRounds);
        }
        let labels = self.finalized_labels()?;
        if !self.finalized {
            self.finalized = true;
            self.actions.push(Action::Finalize);
        }
        Ok(labels)
    }

    /// The finalize output without closing the session.
    pub fn finalized_labels(&self) -> Result<FinalizedLabels> {
        let mut functions = Vec::new();
        if self.config.mode == Mode::Slp {
            for round in &self.rounds {
                let outcome = self.outcome(round.query_id)?;
                if let Some(label) = outcome.decision.label() {
                    functions.push(LabelingFunction {
                        query_id: round.query_id,
                        label,
                        covered: outcome.covered,
                    });
                }
            }
        }
        Ok(FinalizedLabels {
            strong: self.strong_labels(),
            functions,
        })
    }

    pub fn script(&self) -> SessionScript {
        SessionScript {
            header: ScriptHeader {
                v: SCRIPT_VERSION,
                intent: self.intent.clone(),
                corpus_id: self.corpus_id.clone(),
                corpus_fingerprint: self.corpus_fingerprint.clone(),
                config: self.config,
            },
            actions: self.actions.clone(),
        }
    }
}
