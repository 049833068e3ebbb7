//! Independent generative label model fitted by EM.
//!
//! For candidate `j` with latent class `y ∈ {-1, +1}`, weak function `i`
//! contributes `β_i·α_i` when it votes `y`, `β_i·(1-α_i)` when it votes `-y`
//! and `1-β_i` when it abstains. The anchor row (strong labels) has accuracy
//! fixed at 1, so an anchor label pins `y`. Because `β` enters independently
//! of `y`, its maximum-likelihood value is the row coverage fraction and the
//! log-likelihood splits into a `β` part and a per-column `α` part:
//!
//! ```text
//! ℓ = Σ_i [c_i ln β_i + (m - c_i) ln(1 - β_i)]            (anchor row included)
//!   + Σ_j ln Σ_y π(y) · 1[anchor_j ∈ {0, y}] · Π_{i: Λ_ij ≠ 0} acc_i(Λ_ij, y)
//! ```

use serde::{Deserialize, Serialize};

use super::dependencies::DependencyEdge;
use super::matrix::{Columns, LabelMatrix};
use crate::error::{Error, Result};

pub const ALPHA_MIN: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.99;
pub const INIT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    /// Per-function accuracy.
    pub alpha: Vec<f64>,
    /// Per-function labeling propensity.
    pub beta: Vec<f64>,
    /// Propensity of the anchor row; its accuracy is fixed at 1.
    pub anchor_beta: f64,
    /// Prior probability of the positive class.
    pub class_prior: f64,
    pub dependencies: Vec<DependencyEdge>,
}

impl GenerativeParams {
    pub fn alpha_is_clamped(&self, i: usize) -> bool {
        self.alpha[i] <= ALPHA_MIN || self.alpha[i] >= ALPHA_MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub class_prior: f64,
    pub init_alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-14,
            class_prior: 0.5,
            init_alpha: INIT_ALPHA,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if !(self.class_prior > 0.0 && self.class_prior < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "class_prior must lie in (0, 1), got {}",
                self.class_prior
            )));
        }
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&self.init_alpha) {
            return Err(Error::InvalidConfig("init_alpha outside the clamp range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: GenerativeParams,
    /// Log-likelihood at initialization and after every EM iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn beta_term(covered: usize, m: usize, beta: f64) -> f64 {
    xlogy(covered as f64, beta) + xlogy((m - covered) as f64, 1.0 - beta)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log joint weights `(ln P(y=+1, column), ln P(y=-1, column))` excluding β.
fn column_log_weights(col: &[(u32, i8)], alpha: &[f64], prior: f64) -> (f64, f64) {
    let mut pos = prior.ln();
    let mut neg = (1.0 - prior).ln();
    for &(i, v) in col {
        let a = alpha[i as usize];
        if v > 0 {
            pos += a.ln();
            neg += (1.0 - a).ln();
        } else {
            pos += (1.0 - a).ln();
            neg += a.ln();
        }
    }
    (pos, neg)
}

fn column_log_likelihood(col: &[(u32, i8)], anchor: i8, alpha: &[f64], prior: f64) -> f64 {
    let (pos, neg) = column_log_weights(col, alpha, prior);
    match anchor {
        1 => pos,
        -1 => neg,
        _ => log_sum_exp(pos, neg),
    }
}

/// Posterior `P(y = +1)` of one column under the independent model.
pub(crate) fn column_posterior(col: &[(u32, i8)], anchor: i8, alpha: &[f64], prior: f64) -> f64 {
    match anchor {
        1 => 1.0,
        -1 => 0.0,
        _ => {
            let (pos, neg) = column_log_weights(col, alpha, prior);
            sigmoid(pos - neg)
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_likelihood_cols(
    lm: &LabelMatrix,
    cols: &Columns,
    alpha: &[f64],
    beta: &[f64],
    anchor_beta: f64,
    prior: f64,
) -> f64 {
    let m = lm.m();
    let mut ll: f64 = (0..lm.n_functions())
        .map(|i| beta_term(lm.coverage(i), m, beta[i]))
        .sum();
    ll += beta_term(lm.anchor().len(), m, anchor_beta);
    for j in 0..m {
        let col = cols.column(j);
        let anchor = cols.anchor[j];
        if col.is_empty() && anchor == 0 {
            // Σ_y π(y) = 1
            continue;
        }
        ll += column_log_likelihood(col, anchor, alpha, prior);
    }
    ll
}

/// `ℓ(new) - ℓ(old)` summed from per-column differences. Subtracting two
/// full likelihoods loses everything below ~1e-13 to rounding, which stalls
/// the stopping rule long before the gradient is small.
fn improvement(cols: &Columns, m: usize, old: &[f64], new: &[f64], prior: f64) -> f64 {
    // ln(a'/a) and ln((1-a')/(1-a))
    let up: Vec<f64> = old.iter().zip(new).map(|(a, b)| ((b - a) / a).ln_1p()).collect();
    let down: Vec<f64> = old.iter().zip(new).map(|(a, b)| ((a - b) / (1.0 - a)).ln_1p()).collect();
    let mut total = 0.0;
    for j in 0..m {
        let col = cols.column(j);
        if col.is_empty() {
            continue;
        }
        let (mut dp, mut dn) = (0.0, 0.0);
        for &(i, v) in col {
            let i = i as usize;
            if v > 0 {
                dp += up[i];
                dn += down[i];
            } else {
                dp += down[i];
                dn += up[i];
            }
        }
        total += match cols.anchor[j] {
            1 => dp,
            -1 => dn,
            _ => {
                // softplus(x + d) - softplus(x) with x = ln P(-) - ln P(+)
                let (pos, neg) = column_log_weights(col, old, prior);
                dp + (sigmoid(neg - pos) * (dn - dp).exp_m1()).ln_1p()
            }
        };
    }
    total
}

/// Marginal log-likelihood of the label matrix under the given parameters.
pub fn log_likelihood(lm: &LabelMatrix, alpha: &[f64], beta: &[f64], anchor_beta: f64, prior: f64) -> f64 {
    log_likelihood_cols(lm, &lm.columns(), alpha, beta, anchor_beta, prior)
}

/// Fits `α` by EM; `β` is set to its closed-form optimum (row coverage / m)
/// and never changes. Stops when an iteration improves the log-likelihood by
/// less than `tol`.
pub fn fit_generative(lm: &LabelMatrix, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    let m = lm.m();
    let n = lm.n_functions();
    let cols = lm.columns();
    let beta: Vec<f64> = (0..n).map(|i| lm.coverage(i) as f64 / m as f64).collect();
    let anchor_beta = lm.anchor().len() as f64 / m as f64;
    let prior = opts.class_prior;
    let mut alpha = vec![opts.init_alpha; n];

    let ll = log_likelihood_cols(lm, &cols, &alpha, &beta, anchor_beta, prior);
    if !ll.is_finite() {
        return Err(Error::NonFiniteLikelihood(0));
    }
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut agree = vec![0.0; n];

    while iterations < opts.max_iters && n > 0 {
        iterations += 1;
        agree.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..m {
            let col = cols.column(j);
            if col.is_empty() {
                continue;
            }
            let q = column_posterior(col, cols.anchor[j], &alpha, prior);
            for &(i, v) in col {
                agree[i as usize] += if v > 0 { q } else { 1.0 - q };
            }
        }
        let mut next_alpha = alpha.clone();
        for i in 0..n {
            let c = lm.coverage(i);
            if c > 0 {
                next_alpha[i] = (agree[i] / c as f64).clamp(ALPHA_MIN, ALPHA_MAX);
            }
        }
        let gain = improvement(&cols, m, &alpha, &next_alpha, prior);
        alpha = next_alpha;
        let next = log_likelihood_cols(lm, &cols, &alpha, &beta, anchor_beta, prior);
        if !next.is_finite() || !gain.is_finite() {
            return Err(Error::NonFiniteLikelihood(iterations));
        }
        trace.push(next);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    if n == 0 {
        converged = true;
    }
    Ok(FitReport {
        params: GenerativeParams {
            alpha,
            beta,
            anchor_beta,
            class_prior: prior,
            dependencies: Vec::new(),
        },
        trace,
        iterations,
        converged,
    })
}
