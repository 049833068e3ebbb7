use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Confusion::default();
        for (truth, pred) in pairs {
            match (truth, pred) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Binary metrics with `+` the intent class. Ratios with a zero denominator
/// are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision_pos: Option<f64>,
    pub precision_neg: Option<f64>,
    pub recall_pos: Option<f64>,
    pub recall_neg: Option<f64>,
    pub support_pos: usize,
    pub support_neg: usize,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::EmptyTestSet);
        }
        Ok(Metrics {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            precision_pos: ratio(c.tp, c.tp + c.fp),
            precision_neg: ratio(c.tn, c.tn + c.fn_),
            recall_pos: ratio(c.tp, c.tp + c.fn_),
            recall_neg: ratio(c.tn, c.tn + c.fp),
            support_pos: c.tp + c.fn_,
            support_neg: c.tn + c.fp,
            confusion: c,
        })
    }

    /// `[accuracy, precision(+), precision(-), recall(+), recall(-)]`
    pub fn values(&self) -> [Option<f64>; 5] {
        [
            Some(self.accuracy),
            self.precision_pos,
            self.precision_neg,
            self.recall_pos,
            self.recall_neg,
        ]
    }
}

pub const METRIC_COLUMNS: [&str; 5] = ["accuracy", "precision(+)", "precision(-)", "recall(+)", "recall(-)"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"))
}

/// Left-aligned first column, right-aligned cells, two-space gutters.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let mut parts = Vec::with_capacity(cols);
        for (i, cell) in cells.enumerate() {
            parts.push(if i == 0 {
                format!("{cell:<w$}", w = width[0])
            } else {
                format!("{cell:>w$}", w = width[i])
            });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    for row in rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

/// One line per named model, columns in `METRIC_COLUMNS` order.
pub fn metrics_table(rows: &[(&str, &Metrics)]) -> String {
    let mut header = vec!["model"];
    header.extend(METRIC_COLUMNS);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, m)| {
            let mut r = vec![name.to_string()];
            r.extend(m.values().iter().map(|v| fmt_opt(*v)));
            r
        })
        .collect();
    render_table(&header, &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let pairs = (0..10).map(|i| (i % 2 == 0, i % 2 == 0));
        let m = Metrics::from_confusion(Confusion::from_pairs(pairs)).unwrap();
        assert!(m.values().iter().all(|v| *v == Some(1.0)));
        assert_eq!((m.support_pos, m.support_neg), (5, 5));
    }

    #[test]
    fn always_negative_has_no_positive_precision() {
        let pairs = [(true, false), (false, false), (false, false)];
        let m = Metrics::from_confusion(Confusion::from_pairs(pairs)).unwrap();
        assert_eq!(m.recall_pos, Some(0.0));
        assert_eq!(m.precision_pos, None);
        assert_eq!(m.recall_neg, Some(1.0));
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_error() {
        assert!(Metrics::from_confusion(Confusion::default()).is_err());
    }

    #[test]
    fn table_is_aligned() {
        let m = Metrics::from_confusion(Confusion { tp: 1, fp: 1, tn: 7, fn_: 1 }).unwrap();
        let none = Metrics::from_confusion(Confusion { tp: 0, fp: 0, tn: 3, fn_: 1 }).unwrap();
        let t = metrics_table(&[("strong", &m), ("label-only", &none)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("model       accuracy  precision(+)"));
        assert!(lines[1].starts_with("strong         0.800         0.500"));
        assert!(lines[2].contains("    -  ") || lines[2].contains(" - "));
        let ends: Vec<usize> = lines.iter().map(|l| l.len()).collect();
        assert!(ends.windows(2).all(|w| w[0] == w[1]));
    }
}
