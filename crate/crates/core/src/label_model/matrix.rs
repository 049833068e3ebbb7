use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse row: `(candidate index, ±1)` sorted by candidate; absent means abstain.
pub type SparseRow = Vec<(u32, i8)>;

/// Weak label matrix plus the distinguished anchor row of strong labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    m: usize,
    rows: Vec<SparseRow>,
    anchor: SparseRow,
}

impl LabelMatrix {
    /// Builds the matrix from passed labeling functions `(covered, label)` and
    /// strong labels keyed by candidate index.
    pub fn assemble(
        functions: &[(Vec<usize>, i8)],
        strong: &BTreeMap<usize, i8>,
        m: usize,
    ) -> Result<LabelMatrix> {
        if functions.is_empty() && strong.is_empty() {
            return Err(Error::NothingToLearn);
        }
        let mut rows = Vec::with_capacity(functions.len());
        for (covered, label) in functions {
            check_label(*label)?;
            let mut row: SparseRow = Vec::with_capacity(covered.len());
            for &c in covered {
                if c >= m {
                    return Err(Error::CandidateOutOfRange { index: c, m });
                }
                row.push((c as u32, *label));
            }
            row.sort_unstable();
            row.dedup_by_key(|e| e.0);
            rows.push(row);
        }
        let mut anchor = Vec::with_capacity(strong.len());
        for (&c, &label) in strong {
            check_label(label)?;
            if c >= m {
                return Err(Error::CandidateOutOfRange { index: c, m });
            }
            anchor.push((c as u32, label));
        }
        Ok(LabelMatrix { m, rows, anchor })
    }

    /// Builds a matrix from explicit sparse rows (entries must be ±1).
    pub fn from_rows(rows: Vec<SparseRow>, anchor: SparseRow, m: usize) -> Result<LabelMatrix> {
        let mut out = LabelMatrix { m, rows, anchor };
        for row in out.rows.iter_mut().chain(std::iter::once(&mut out.anchor)) {
            row.sort_unstable();
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Format(format!("candidate {} labeled twice in one row", w[0].0)));
                }
            }
            for &(c, v) in row.iter() {
                check_label(v)?;
                if c as usize >= m {
                    return Err(Error::CandidateOutOfRange { index: c as usize, m });
                }
            }
        }
        Ok(out)
    }

    /// Number of weak (non-anchor) labeling functions.
    pub fn n_functions(&self) -> usize {
        self.rows.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn anchor(&self) -> &SparseRow {
        &self.anchor
    }

    pub fn coverage(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    /// Dense lookup of one entry (0 for abstain).
    pub fn get(&self, i: usize, j: usize) -> i8 {
        lookup(&self.rows[i], j)
    }

    pub fn anchor_label(&self, j: usize) -> i8 {
        lookup(&self.anchor, j)
    }

    /// The same matrix with every label negated.
    pub fn negated(&self) -> LabelMatrix {
        let flip = |row: &SparseRow| row.iter().map(|&(c, v)| (c, -v)).collect();
        LabelMatrix {
            m: self.m,
            rows: self.rows.iter().map(flip).collect(),
            anchor: flip(&self.anchor),
        }
    }

    /// Column-major view: for each candidate, the `(function, label)` pairs.
    pub(crate) fn columns(&self) -> Columns {
        let mut counts = vec![0usize; self.m + 1];
        for row in &self.rows {
            for &(c, _) in row {
                counts[c as usize + 1] += 1;
            }
        }
        for j in 0..self.m {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut entries = vec![(0u32, 0i8); offsets[self.m]];
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                let slot = &mut fill[c as usize];
                entries[*slot] = (i as u32, v);
                *slot += 1;
            }
        }
        let mut anchor = vec![0i8; self.m];
        for &(c, v) in &self.anchor {
            anchor[c as usize] = v;
        }
        Columns {
            offsets,
            entries,
            anchor,
        }
    }

    /// Candidates labeled by at least one function, anchor included.
    pub fn covered_candidates(&self) -> Vec<usize> {
        let cols = self.columns();
        (0..self.m)
            .filter(|&j| !cols.column(j).is_empty() || cols.anchor[j] != 0)
            .collect()
    }

    /// Sparse triplet export: header `L m` (anchor counted as the last
    /// function), then one `function_index,candidate_index,value` per entry.
    pub fn to_triplets(&self) -> String {
        let mut out = format!("{} {}\n", self.rows.len() + 1, self.m);
        for (i, row) in self.rows.iter().chain(std::iter::once(&self.anchor)).enumerate() {
            for &(c, v) in row {
                let _ = writeln!(out, "{i},{c},{v}");
            }
        }
        out
    }

    pub fn from_triplets(text: &str) -> Result<LabelMatrix> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty label matrix".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [l, m] = dims[..] else {
            return Err(Error::Format(format!("bad header {header:?}")));
        };
        if l == 0 {
            return Err(Error::Format("matrix must contain the anchor row".into()));
        }
        let mut rows = vec![Vec::new(); l];
        for (n, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::MalformedRecord {
                line: n + 2,
                reason: format!("expected function,candidate,value in {line:?}"),
            };
            if parts.len() != 3 {
                return Err(bad());
            }
            let i: usize = parts[0].parse().map_err(|_| bad())?;
            let c: u32 = parts[1].parse().map_err(|_| bad())?;
            let v: i8 = parts[2].parse().map_err(|_| bad())?;
            if i >= l {
                return Err(bad());
            }
            rows[i].push((c, v));
        }
        let anchor = rows.pop().unwrap_or_default();
        LabelMatrix::from_rows(rows, anchor, m)
    }
}

fn check_label(label: i8) -> Result<()> {
    if label == 1 || label == -1 {
        Ok(())
    } else {
        Err(Error::Format(format!("label must be +1 or -1, got {label}")))
    }
}

fn lookup(row: &SparseRow, j: usize) -> i8 {
    row.binary_search_by_key(&(j as u32), |e| e.0)
        .map_or(0, |i| row[i].1)
}

pub(crate) struct Columns {
    offsets: Vec<usize>,
    entries: Vec<(u32, i8)>,
    pub(crate) anchor: Vec<i8>,
}

impl Columns {
    pub(crate) fn column(&self, j: usize) -> &[(u32, i8)] {
        &self.entries[self.offsets[j]..self.offsets[j + 1]]
    }
}
