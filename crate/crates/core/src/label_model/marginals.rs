use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dependencies::DependencyKind;
use super::generative::{sigmoid, GenerativeParams};
use super::matrix::LabelMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Anchor,
    Weak,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Anchor => "anchor",
            Source::Weak => "weak",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub p: f64,
    pub source: Source,
}

/// Posterior class probabilities keyed by candidate index, defined exactly on
/// the candidates covered by at least one function or the anchor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarginalLabels {
    pub entries: BTreeMap<usize, Marginal>,
}

impl MarginalLabels {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, j: usize) -> Option<f64> {
        self.entries.get(&j).map(|m| m.p)
    }

    pub fn count(&self, source: Source) -> usize {
        self.entries.values().filter(|m| m.source == source).count()
    }

    /// CSV `utterance_id,p,source`, ordered by candidate index.
    pub fn to_csv(&self, id_of: impl Fn(usize) -> u64) -> String {
        let mut out = String::from("utterance_id,p,source\n");
        for (&j, m) in &self.entries {
            let _ = writeln!(out, "{},{},{}", id_of(j), m.p, m.source.as_str());
        }
        out
    }
}

/// One row of a marginals export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub utterance_id: u64,
    pub p: f64,
    pub source: Source,
}

pub fn read_marginals_csv(text: &str) -> Result<Vec<MarginalRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<MarginalRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedRow {
            row: i + 2,
            reason: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&rec.p) {
            return Err(Error::MalformedRow {
                row: i + 2,
                reason: format!("probability {} outside [0, 1]", rec.p),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Computes per-candidate posteriors. Anchor-labeled candidates are exactly 0
/// or 1. Otherwise the log-odds sum each voting function's
/// `±ln(α/(1-α))`, after dropping functions fixed by a disagreeing partner
/// and scaling the second function of an agreeing reinforcing pair.
pub fn marginals(lm: &LabelMatrix, params: &GenerativeParams) -> MarginalLabels {
    let cols = lm.columns();
    let prior_logit = (params.class_prior / (1.0 - params.class_prior)).ln();
    let log_odds: Vec<f64> = params
        .alpha
        .iter()
        .map(|a| (a / (1.0 - a)).ln())
        .collect();
    let mut entries = BTreeMap::new();
    let mut weights = vec![1.0; lm.n_functions()];
    let mut votes = vec![0i8; lm.n_functions()];
    for j in 0..lm.m() {
        let col = cols.column(j);
        match cols.anchor[j] {
            0 if col.is_empty() => {}
            0 => {
                for &(i, v) in col {
                    votes[i as usize] = v;
                    weights[i as usize] = 1.0;
                }
                for e in &params.dependencies {
                    let (a, b) = (votes[e.first], votes[e.second]);
                    if a == 0 || b == 0 {
                        continue;
                    }
                    match e.kind {
                        DependencyKind::Fixing if a != b => weights[e.second] = 0.0,
                        DependencyKind::Reinforcing if a == b => weights[e.second] *= e.weight,
                        _ => {}
                    }
                }
                let mut x = prior_logit;
                for &(i, v) in col {
                    let i = i as usize;
                    x += f64::from(v) * weights[i] * log_odds[i];
                }
                for &(i, _) in col {
                    votes[i as usize] = 0;
                }
                entries.insert(
                    j,
                    Marginal {
                        p: sigmoid(x),
                        source: Source::Weak,
                    },
                );
            }
            a => {
                entries.insert(
                    j,
                    Marginal {
                        p: if a > 0 { 1.0 } else { 0.0 },
                        source: Source::Anchor,
                    },
                );
            }
        }
    }
    MarginalLabels { entries }
}
