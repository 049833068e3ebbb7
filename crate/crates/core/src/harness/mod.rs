//! Synthetic corpora, a scripted oracle labeler and the SLP vs label-only
//! experiment runner.

mod experiment;
mod oracle;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use experiment::{
    run_experiment, Budget, BudgetLimits, ExperimentData, RunConfig, RunOutcome, LABEL_ONLY_LABELS,
    LABEL_ONLY_QUERIES, SLP_LABELS, SLP_QUERIES,
};
pub use oracle::{OracleLabeler, OracleParams};
pub use synthetic::{
    corpus_id_for, generate_corpus, GroundTruth, IntentSpec, SyntheticData, SyntheticSpec,
    MIN_EXPECTED_TEST_POSITIVES,
};

use crate::downstream::{render_table, Metrics, METRIC_COLUMNS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntentPolicy {
    /// Seed number `i` (in list order) studies intent `i mod #intents`.
    #[default]
    Rotate,
    /// Every seed studies every intent.
    All,
}

/// Class prior handed to the label model in slp runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorPolicy {
    /// The studied intent's generating prevalence.
    #[default]
    TrueSkew,
    /// Whatever `run.label_model.fit.class_prior` says.
    Config,
}

/// Values to sweep; an empty list keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Grid {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub threshold: Vec<f64>,
    pub error_rate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub k: usize,
    pub threshold: f64,
    pub error_rate: f64,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N={} k={} A={} error_rate={}", self.n, self.k, self.threshold, self.error_rate)
    }
}

/// The single JSON document driving `slp experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticSpec,
    /// Each seed fixes the corpus, session sampling, oracle and forests.
    pub seeds: Vec<u64>,
    pub intent_policy: IntentPolicy,
    pub prior: PriorPolicy,
    pub run: RunConfig,
    pub oracle: OracleParams,
    pub slp_budget: BudgetLimits,
    pub label_only_budget: BudgetLimits,
    pub grid: Grid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            seeds: (0..10).collect(),
            intent_policy: IntentPolicy::Rotate,
            prior: PriorPolicy::TrueSkew,
            run: RunConfig::default(),
            oracle: OracleParams::default(),
            slp_budget: BudgetLimits::SLP,
            label_only_budget: BudgetLimits::LABEL_ONLY,
            grid: Grid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn cells(&self) -> Vec<Cell> {
        let pick = |v: &Vec<usize>, base| if v.is_empty() { vec![base] } else { v.clone() };
        let pickf = |v: &Vec<f64>, base| if v.is_empty() { vec![base] } else { v.clone() };
        let s = &self.run.session;
        let mut cells = Vec::new();
        for &n in &pick(&self.grid.n, s.n) {
            for &k in &pick(&self.grid.k, s.k) {
                for &threshold in &pickf(&self.grid.threshold, s.threshold) {
                    for &error_rate in &pickf(&self.grid.error_rate, self.oracle.error_rate) {
                        cells.push(Cell { n, k, threshold, error_rate });
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        self.synthetic.validate()?;
        self.oracle.validate()?;
        self.run.forest.validate()?;
        self.run.label_model.fit.validate()?;
        for c in self.cells() {
            let mut s = self.run.session;
            s.n = c.n;
            s.k = c.k;
            s.threshold = c.threshold;
            s.validate()?;
            OracleParams { error_rate: c.error_rate, ..self.oracle }.validate()?;
        }
        Ok(())
    }
}

/// One seed of one grid cell: the SLP session and the label-only baseline
/// on the same corpus and intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: Cell,
    pub seed: u64,
    pub intent: String,
    pub slp: RunOutcome,
    pub label_only: RunOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<RunRecord>,
}

fn data_for(spec: &SyntheticSpec, seed: u64) -> Result<ExperimentData> {
    let spec = SyntheticSpec {
        rng_seed: seed,
        ..spec.clone()
    };
    ExperimentData::new(generate_corpus(&spec)?)
}

/// Runs every cell × seed (× intent under [`IntentPolicy::All`]). Runs are
/// independent and execute in parallel; output order is deterministic.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let datasets: Vec<ExperimentData> = config
        .seeds
        .par_iter()
        .map(|&s| data_for(&config.synthetic, s))
        .collect::<Result<_>>()?;
    let names: Vec<&str> = config.synthetic.intents.iter().map(|i| i.name.as_str()).collect();

    let mut jobs = Vec::new();
    for cell in config.cells() {
        for (si, &seed) in config.seeds.iter().enumerate() {
            match config.intent_policy {
                IntentPolicy::Rotate => jobs.push((cell, si, seed, names[si % names.len()])),
                IntentPolicy::All => jobs.extend(names.iter().map(|n| (cell, si, seed, *n))),
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(cell, si, seed, intent)| run_cell(config, &datasets[si], cell, seed, intent))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

fn run_cell(config: &ExperimentConfig, ctx: &ExperimentData, cell: Cell, seed: u64, intent: &str) -> Result<RunRecord> {
    let spec = config
        .synthetic
        .intent(intent)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown intent {intent:?}")))?;
    let mut run = config.run;
    run.session.n = cell.n;
    run.session.k = cell.k;
    run.session.threshold = cell.threshold;
    run.session.rng_seed = seed;
    run.forest.seed = seed;
    if config.prior == PriorPolicy::TrueSkew {
        run.label_model.fit.class_prior = spec.prevalence;
    }
    let oracle_params = OracleParams {
        error_rate: cell.error_rate,
        ..config.oracle
    };
    let oracle = OracleLabeler::new(&ctx.data.truth, intent, oracle_params, seed)?;
    let slp = run_experiment(ctx, intent, &Budget::slp(spec, config.slp_budget), &oracle, &run)?;
    let label_only = run_experiment(ctx, intent, &Budget::label_only(spec, config.label_only_budget), &oracle, &run)?;
    Ok(RunRecord {
        cell,
        seed,
        intent: intent.to_owned(),
        slp,
        label_only,
    })
}

pub const MODEL_ROWS: [&str; 3] = ["(1) Label-only", "(2) SLP: strong", "(3) SLP: weak"];

impl RunRecord {
    /// `(model, n_query, n_label, metrics)` in summary-table row order. The weak
    /// model's label count is its training-set size (weak plus anchor).
    pub fn models(&self) -> [(&'static str, Option<usize>, usize, &Metrics); 3] {
        let weak = self.slp.weak.as_ref().expect("slp runs always report weak metrics");
        [
            (MODEL_ROWS[0], Some(self.label_only.n_queries), self.label_only.n_labels, &self.label_only.strong),
            (MODEL_ROWS[1], Some(self.slp.n_queries), self.slp.n_labels, &self.slp.strong),
            (MODEL_ROWS[2], None, self.slp.n_weak + self.slp.n_anchor, weak),
        ]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

impl SweepResult {
    /// Long format: one line per run and model.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,k,threshold,error_rate,seed,intent,model,n_query,n_label,n_weak,n_anchor,degenerate,accuracy,precision_pos,precision_neg,recall_pos,recall_neg\n",
        );
        for r in &self.rows {
            for (name, nq, nl, m) in r.models() {
                let degenerate = if name == MODEL_ROWS[0] { r.label_only.degenerate } else { r.slp.degenerate };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.cell.n,
                    r.cell.k,
                    r.cell.threshold,
                    r.cell.error_rate,
                    r.seed,
                    r.intent,
                    name,
                    nq.map_or_else(String::new, |v| v.to_string()),
                    nl,
                    r.slp.n_weak,
                    r.slp.n_anchor,
                    degenerate,
                    m.accuracy,
                    opt(m.precision_pos),
                    opt(m.precision_neg),
                    opt(m.recall_pos),
                    opt(m.recall_neg),
                );
            }
        }
        out
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = Vec::new();
        for r in &self.rows {
            if !cells.contains(&r.cell) {
                cells.push(r.cell);
            }
        }
        cells
    }

    /// One summary block per cell with `mean (std)` entries.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for cell in self.cells() {
            let rows: Vec<&RunRecord> = self.rows.iter().filter(|r| r.cell == cell).collect();
            let degenerate = rows.iter().filter(|r| r.slp.degenerate || r.label_only.degenerate).count();
            let _ = writeln!(out, "{cell} ({} runs, {degenerate} degenerate)", rows.len());
            let mut header = vec!["", "N (query)", "N (label)"];
            header.extend(METRIC_COLUMNS);
            let body: Vec<Vec<String>> = (0..3)
                .map(|mi| {
                    let picked: Vec<_> = rows.iter().map(|r| r.models()[mi]).collect();
                    let mut line = vec![MODEL_ROWS[mi].to_owned()];
                    line.push(if mi == 2 {
                        "-".to_owned()
                    } else {
                        mean_std(picked.iter().map(|p| p.1.map(|v| v as f64)), 2)
                    });
                    line.push(mean_std(picked.iter().map(|p| Some(p.2 as f64)), 2));
                    for k in 0..5 {
                        line.push(mean_std(picked.iter().map(|p| p.3.values()[k]), 3));
                    }
                    line
                })
                .collect();
            out.push_str(&render_table(&header, &body));
            out.push('\n');
        }
        out
    }
}

/// Direction of the SLP comparison over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub runs: usize,
    /// Runs where the weak model beats the strong model on both accuracy and
    /// precision(+). An undefined precision never wins.
    pub weak_wins: usize,
    pub label_only_accuracy: f64,
    pub strong_accuracy: f64,
    pub weak_accuracy: f64,
}

impl Trend {
    pub fn holds(&self, min_wins: usize) -> bool {
        self.weak_wins >= min_wins
            && self.strong_accuracy > self.label_only_accuracy
            && self.weak_accuracy > self.label_only_accuracy
    }
}

impl RunRecord {
    pub fn weak_beats_strong(&self) -> bool {
        let weak = self.slp.weak.as_ref().expect("slp runs always report weak metrics");
        let strong = &self.slp.strong;
        let precision = match (weak.precision_pos, strong.precision_pos) {
            (Some(w), Some(s)) => w > s,
            (Some(_), None) => true,
            (None, _) => false,
        };
        weak.accuracy > strong.accuracy && precision
    }
}

impl SweepResult {
    pub fn trend(&self) -> Trend {
        let mean = |f: &dyn Fn(&RunRecord) -> f64| {
            mean_and_std(self.rows.iter().map(f)).map_or(f64::NAN, |m| m.0)
        };
        Trend {
            runs: self.rows.len(),
            weak_wins: self.rows.iter().filter(|r| r.weak_beats_strong()).count(),
            label_only_accuracy: mean(&|r| r.label_only.strong.accuracy),
            strong_accuracy: mean(&|r| r.slp.strong.accuracy),
            weak_accuracy: mean(&|r| r.slp.weak.as_ref().map_or(f64::NAN, |w| w.accuracy)),
        }
    }
}

/// Mean and sample standard deviation over the defined values.
pub fn mean_and_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn mean_std(values: impl Iterator<Item = Option<f64>>, digits: usize) -> String {
    match mean_and_std(values.flatten()) {
        Some((m, s)) => format!("{m:.digits$} ({s:.digits$})"),
        None => "-".to_owned(),
    }
}

/// Per-model means over runs, keyed by summary-table row name.
pub fn mean_metrics(rows: &[RunRecord]) -> BTreeMap<&'static str, [Option<f64>; 5]> {
    let mut out = BTreeMap::new();
    for (mi, name) in MODEL_ROWS.iter().enumerate() {
        let mut cols = [None; 5];
        for (k, col) in cols.iter_mut().enumerate() {
            *col = mean_and_std(rows.iter().filter_map(|r| r.models()[mi].3.values()[k])).map(|p| p.0);
        }
        out.insert(*name, cols);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_to_cells() {
        let cfg = ExperimentConfig {
            grid: Grid {
                threshold: vec![0.5, 0.6, 0.7],
                ..Default::default()
            },
            ..Default::default()
        };
        let cells = cfg.cells();
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|c| c.n == 100 && c.k == 10 && c.error_rate == 0.05));
    }

    #[test]
    fn mean_std_formatting() {
        assert_eq!(mean_std([Some(1.0), Some(3.0), None].into_iter(), 3), "2.000 (1.414)");
        assert_eq!(mean_std([None].into_iter(), 3), "-");
        assert_eq!(mean_std([Some(0.5)].into_iter(), 2), "0.50 (0.00)");
    }

    #[test]
    fn config_round_trips_and_defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seeds": [3, 4], "oracle": {"error_rate": 0.0}}"#).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.oracle.abstain_rate, 0.05);
        assert_eq!(cfg.synthetic.n_utterances, 10_000);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
