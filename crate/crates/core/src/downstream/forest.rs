//! CART decision forests over sparse non-negative feature rows.
//!
//! A split sends `x[f] <= threshold` left. Absent features read as 0, so
//! the zero group of a feature is always the leftmost block of its sorted
//! values. Leaves store the weighted mean target; for the classifier the
//! targets are 0/1 and the mean is the positive fraction.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tfidf::SparseVec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    Classifier,
    Regressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFraction {
    Sqrt,
    All,
    Fraction(f64),
}

impl FeatureFraction {
    fn count(self, n_features: usize) -> usize {
        let k = match self {
            FeatureFraction::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            FeatureFraction::All => n_features,
            FeatureFraction::Fraction(f) => (f * n_features as f64).ceil() as usize,
        };
        k.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or hit `min_leaf`.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub feature_fraction: FeatureFraction,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feature_fraction: FeatureFraction::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if let FeatureFraction::Fraction(f) = self.feature_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!("feature fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

fn feature_value(row: &[(u32, f64)], f: u32) -> f64 {
    row.binary_search_by_key(&f, |e| e.0).map_or(0.0, |k| row[k].1)
}

impl Tree {
    pub fn predict(&self, row: &[(u32, f64)]) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if feature_value(row, feature) <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// Anything that maps a feature row to a score in [0, 1].
pub trait Predictor {
    fn score(&self, row: &[(u32, f64)]) -> f64;
}

/// Used when training is impossible (single-class labels): always returns
/// the same score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn score(&self, _row: &[(u32, f64)]) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub kind: ForestKind,
    pub params: ForestParams,
    pub n_features: usize,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean of the per-tree leaf values.
    pub fn predict(&self, row: &[(u32, f64)]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

impl Predictor for Forest {
    fn score(&self, row: &[(u32, f64)]) -> f64 {
        self.predict(row)
    }
}

fn check_rows(x: &[SparseVec], n_targets: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput("no training rows"));
    }
    if x.len() != n_targets {
        return Err(Error::InvalidConfig(format!(
            "{} feature rows but {} targets",
            x.len(),
            n_targets
        )));
    }
    for (i, row) in x.iter().enumerate() {
        if row.iter().any(|e| !(e.1.is_finite() && e.1 >= 0.0)) {
            return Err(Error::InvalidConfig(format!("negative or non-finite feature in row {i}")));
        }
        if row.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig(format!("row {i} is not sorted by column")));
        }
    }
    Ok(())
}

/// Gini criterion on labels in {-1, +1}.
pub fn train_classifier(x: &[SparseVec], y: &[i8], n_features: usize, params: &ForestParams) -> Result<Forest> {
    check_rows(x, y.len())?;
    if let Some(bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::InvalidConfig(format!("class label must be 1 or -1, got {bad}")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateTrainingSet(format!(
            "all {} labels are {}",
            y.len(),
            if y[0] > 0 { "positive" } else { "negative" }
        )));
    }
    let targets: Vec<f64> = y.iter().map(|&v| if v > 0 { 1.0 } else { 0.0 }).collect();
    fit(ForestKind::Classifier, x, &targets, n_features, params)
}

/// Variance criterion on targets in [0, 1].
pub fn train_regressor(x: &[SparseVec], p: &[f64], n_features: usize, params: &ForestParams) -> Result<Forest> {
    check_rows(x, p.len())?;
    if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidConfig(format!("target {v} in row {i} outside [0, 1]")));
    }
    fit(ForestKind::Regressor, x, p, n_features, params)
}

fn fit(kind: ForestKind, x: &[SparseVec], y: &[f64], n_features: usize, params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            grow_tree(kind, x, y, n_features, params, &mut rng)
        })
        .collect();
    Ok(Forest {
        kind,
        params: *params,
        n_features,
        trees,
    })
}

#[derive(Debug, Default, Clone, Copy)]
struct Stats {
    w: f64,
    s: f64,
    q: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, w: f64, y: f64) {
        self.w += w;
        self.s += w * y;
        self.q += w * y * y;
        self.n += 1;
    }

    fn minus(self, o: Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            s: self.s - o.s,
            q: self.q - o.q,
            n: self.n - o.n,
        }
    }

    fn impurity(&self, kind: ForestKind) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        match kind {
            // weighted Gini for two classes: w · 2p(1-p)
            ForestKind::Classifier => {
                let p = self.s / self.w;
                2.0 * self.w * p * (1.0 - p)
            }
            ForestKind::Regressor => (self.q - self.s * self.s / self.w).max(0.0),
        }
    }
}

struct Split {
    feature: u32,
    threshold: f64,
    gain: f64,
}

/// Nodes at or below this impurity are leaves.
const PURE: f64 = 1e-15;

fn grow_tree(
    kind: ForestKind,
    x: &[SparseVec],
    y: &[f64],
    n_features: usize,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = x.len();
    let mut weights = vec![0.0f64; n];
    if params.bootstrap {
        for _ in 0..n {
            weights[rng.gen_range(0..n)] += 1.0;
        }
    } else {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    let root: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let want = params.feature_fraction.count(n_features.max(1));

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut work = vec![(0usize, root, 0usize)];
    while let Some((at, samples, depth)) = work.pop() {
        let mut stats = Stats::default();
        for &i in &samples {
            stats.add(weights[i as usize], y[i as usize]);
        }
        let value = stats.s / stats.w;
        let splittable = params.max_depth.is_none_or(|d| depth < d)
            && samples.len() >= 2 * params.min_leaf
            && stats.impurity(kind) > PURE;
        let best = if splittable {
            best_split(kind, x, y, &weights, &samples, stats, want, params.min_leaf, rng)
        } else {
            None
        };
        let Some(split) = best else {
            nodes[at] = Node::Leaf { value };
            continue;
        };
        let (left, right): (Vec<u32>, Vec<u32>) = samples
            .iter()
            .partition(|&&i| feature_value(&x[i as usize], split.feature) <= split.threshold);
        let l = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l as u32,
            right: l as u32 + 1,
        };
        work.push((l + 1, right, depth + 1));
        work.push((l, left, depth + 1));
    }
    Tree { nodes }
}

/// Visits the node's present features in random order and keeps evaluating
/// until `want` features admitted a valid split (constant features do not
/// count), mirroring the usual max-features rule.
#[allow(clippy::too_many_arguments)]
fn best_split(
    kind: ForestKind,
    x: &[SparseVec],
    y: &[f64],
    weights: &[f64],
    samples: &[u32],
    total: Stats,
    want: usize,
    min_leaf: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Split> {
    let mut by_feature: HashMap<u32, Vec<(f64, u32)>> = HashMap::new();
    for &i in samples {
        for &(f, v) in &x[i as usize] {
            if v != 0.0 {
                by_feature.entry(f).or_default().push((v, i));
            }
        }
    }
    let mut features: Vec<u32> = by_feature.keys().copied().collect();
    features.sort_unstable();
    features.shuffle(rng);

    let parent = total.impurity(kind);
    let mut best: Option<Split> = None;
    let mut evaluated = 0;
    for f in features {
        if evaluated >= want {
            break;
        }
        let mut entries = std::mem::take(by_feature.get_mut(&f).unwrap());
        entries.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut present = Stats::default();
        for &(_, i) in &entries {
            present.add(weights[i as usize], y[i as usize]);
        }
        let zeros = total.minus(present);
        let mut left = zeros;
        let mut found = false;
        let mut prev = 0.0;
        for k in 0..=entries.len() {
            // boundary between `prev` and entries[k]
            let boundary = if k == 0 { zeros.n > 0 } else { k == entries.len() || entries[k].0 > prev };
            if boundary && k < entries.len() && left.n >= min_leaf && total.n - left.n >= min_leaf {
                let right = total.minus(left);
                let gain = parent - left.impurity(kind) - right.impurity(kind);
                found = true;
                // zero-gain splits are kept: an impure XOR-shaped node has no
                // positive-gain split but its children do
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let next = entries[k].0;
                    let mut threshold = prev + (next - prev) / 2.0;
                    if threshold >= next {
                        threshold = prev;
                    }
                    best = Some(Split { feature: f, threshold, gain });
                }
            }
            if k < entries.len() {
                let (v, i) = entries[k];
                left.add(weights[i as usize], y[i as usize]);
                prev = v;
            }
        }
        if found {
            evaluated += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(rows: &[&[u32]]) -> Vec<SparseVec> {
        rows.iter().map(|r| r.iter().map(|&c| (c, 1.0)).collect()).collect()
    }

    #[test]
    fn separable_pair_is_learned() {
        let x = one_hot(&[&[0], &[1]]);
        let f = train_classifier(&x, &[1, -1], 2, &ForestParams { bootstrap: false, ..Default::default() }).unwrap();
        assert_eq!(f.predict(&x[0]), 1.0);
        assert_eq!(f.predict(&x[1]), 0.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = one_hot(&[&[0], &[1]]);
        assert!(matches!(
            train_classifier(&x, &[1, 1], 2, &ForestParams::default()),
            Err(Error::DegenerateTrainingSet(_))
        ));
    }

    #[test]
    fn constant_targets_predict_constant() {
        let x = one_hot(&[&[0], &[1, 2], &[2], &[]]);
        let f = train_regressor(&x, &[0.7; 4], 3, &ForestParams::default()).unwrap();
        for row in &x {
            assert!((f.predict(row) - 0.7).abs() < 1e-12);
        }
        assert!(f.trees().iter().all(|t| t.n_nodes() == 1));
    }

    #[test]
    fn same_seed_same_forest() {
        let x = one_hot(&[&[0, 3], &[1], &[2, 3], &[0, 1], &[3]]);
        let y = [1, -1, 1, -1, 1];
        let p = ForestParams { n_trees: 20, seed: 9, ..Default::default() };
        let a = train_classifier(&x, &y, 4, &p).unwrap();
        let b = train_classifier(&x, &y, 4, &p).unwrap();
        assert_eq!(a, b);
        let c = train_classifier(&x, &y, 4, &ForestParams { seed: 10, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn max_depth_and_min_leaf_respected() {
        let x: Vec<SparseVec> = (0..40).map(|i| vec![(0, i as f64 + 1.0)]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64 / 6.0).collect();
        let p = ForestParams {
            n_trees: 1,
            max_depth: Some(3),
            bootstrap: false,
            ..Default::default()
        };
        assert!(train_regressor(&x, &y, 1, &p).unwrap().trees()[0].depth() <= 3);
        let p = ForestParams { max_depth: None, min_leaf: 8, ..p };
        let f = train_regressor(&x, &y, 1, &p).unwrap();
        // 40 rows with leaves of ≥ 8 allow at most 5 leaves
        assert!(f.trees()[0].n_nodes() <= 9);
    }

    #[test]
    fn threshold_between_values() {
        let x: Vec<SparseVec> = vec![vec![(0, 0.25)], vec![(0, 0.75)], vec![]];
        let f = train_regressor(&x, &[0.0, 1.0, 0.0], 1, &ForestParams { n_trees: 1, bootstrap: false, ..Default::default() }).unwrap();
        assert_eq!(f.predict(&[(0, 0.5)]), 0.0);
        assert_eq!(f.predict(&[(0, 0.51)]), 1.0);
        assert_eq!(f.predict(&[]), 0.0);
    }

    #[test]
    fn bad_inputs() {
        let x = one_hot(&[&[0], &[1]]);
        assert!(train_regressor(&[], &[], 1, &ForestParams::default()).is_err());
        assert!(train_regressor(&x, &[0.5, 1.5], 2, &ForestParams::default()).is_err());
        assert!(train_regressor(&x, &[0.5], 2, &ForestParams::default()).is_err());
        assert!(train_regressor(&x, &[0.5, 0.5], 2, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
        let unsorted = vec![vec![(2, 1.0), (1, 1.0)], vec![]];
        assert!(train_regressor(&unsorted, &[0.5, 0.5], 3, &ForestParams::default()).is_err());
    }
}
