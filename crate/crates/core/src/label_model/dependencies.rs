//! Pairwise fixing/reinforcing dependency selection from agreement statistics.
//!
//! For every pair of functions with enough jointly covered candidates, the
//! agreement rate on those candidates decides the edge: high agreement means
//! the pair reinforces each other, near-total disagreement means one fixes
//! the other, with the anchor row deciding which one is right.

use serde::{Deserialize, Serialize};

use super::matrix::{LabelMatrix, SparseRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependencyKind {
    /// `first` is trusted over `second` when they disagree.
    Fixing,
    Reinforcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub first: usize,
    pub second: usize,
    pub kind: DependencyKind,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DependencyOptions {
    pub enabled: bool,
    /// Agreement threshold τ.
    pub threshold: f64,
    pub min_overlap: usize,
    /// Factor applied to the second function's log-odds contribution when a
    /// reinforcing pair agrees.
    pub reinforce_weight: f64,
}

impl Default for DependencyOptions {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: 0.9,
            min_overlap: 10,
            reinforce_weight: 0.5,
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct PairStats {
    joint: usize,
    agree: usize,
    /// Disagreements where the anchor sides with the first / second function.
    first_right: usize,
    second_right: usize,
}

fn pair_stats(a: &SparseRow, b: &SparseRow, anchor: &SparseRow) -> PairStats {
    let mut s = PairStats::default();
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        let (ca, va) = a[x];
        let (cb, vb) = b[y];
        if ca < cb {
            x += 1;
        } else if cb < ca {
            y += 1;
        } else {
            s.joint += 1;
            if va == vb {
                s.agree += 1;
            } else if let Ok(k) = anchor.binary_search_by_key(&ca, |e| e.0) {
                if anchor[k].1 == va {
                    s.first_right += 1;
                } else {
                    s.second_right += 1;
                }
            }
            x += 1;
            y += 1;
        }
    }
    s
}

/// Selects at most one edge per unordered pair of weak functions.
pub fn learn_dependencies(lm: &LabelMatrix, opts: &DependencyOptions) -> Vec<DependencyEdge> {
    let mut edges = Vec::new();
    let n = lm.n_functions();
    for i in 0..n {
        for j in i + 1..n {
            let s = pair_stats(lm.row(i), lm.row(j), lm.anchor());
            if s.joint == 0 || s.joint < opts.min_overlap {
                continue;
            }
            let rate = s.agree as f64 / s.joint as f64;
            if rate >= opts.threshold {
                edges.push(DependencyEdge {
                    first: i,
                    second: j,
                    kind: DependencyKind::Reinforcing,
                    weight: opts.reinforce_weight,
                });
            } else if rate <= 1.0 - opts.threshold {
                let (first, second) = match s.first_right.cmp(&s.second_right) {
                    std::cmp::Ordering::Greater => (i, j),
                    std::cmp::Ordering::Less => (j, i),
                    std::cmp::Ordering::Equal => continue,
                };
                edges.push(DependencyEdge {
                    first,
                    second,
                    kind: DependencyKind::Fixing,
                    weight: 1.0,
                });
            }
        }
    }
    edges
}
