//! The Conway-Maxwell-multinomial distribution.
//!
//! `P(y) = binom(m; y)^nu * prod p_j^y_j / C(p, nu; m)` on the multinomial
//! sample space. Every constant is computed exactly by one pass over the
//! space and kept in natural-log form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CmmError, Result};
use crate::logspace::{LnFactorial, LogSumExp, WeightedMoments};
use crate::space::{enumerate_compositions, log_multinomial_coeff, CountVector};

const SUM_TOL: f64 = 1e-12;

/// Parameters `(m, p, nu)` of one CMM distribution plus the baseline
/// category used for odds and logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmmParams {
    m: u32,
    p: Vec<f64>,
    nu: f64,
    baseline: usize,
}

impl CmmParams {
    /// Probability-parameterized constructor; the baseline is the last category.
    pub fn new(m: u32, p: Vec<f64>, nu: f64) -> Result<Self> {
        if m < 1 {
            return Err(CmmError::InvalidArgument("m must be at least 1".into()));
        }
        validate_probabilities(&p)?;
        if !nu.is_finite() {
            return Err(CmmError::InvalidArgument(format!("nu must be finite, got {nu}")));
        }
        let baseline = p.len() - 1;
        Ok(Self { m, p, nu, baseline })
    }

    /// Builds parameters from baseline odds `theta_j = p_j / p_k`, `j < k`.
    pub fn from_odds(m: u32, theta: &[f64], nu: f64) -> Result<Self> {
        if theta.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(CmmError::InvalidArgument(format!("odds must be positive and finite: {theta:?}")));
        }
        let denom = 1.0 + theta.iter().sum::<f64>();
        let mut p: Vec<f64> = theta.iter().map(|t| t / denom).collect();
        p.push(1.0 / denom);
        Self::new(m, p, nu)
    }

    /// Builds parameters from baseline logits relative to category `baseline`.
    ///
    /// `phi` has `k - 1` entries, one per non-baseline category in index order.
    pub fn from_logits(m: u32, phi: &[f64], nu: f64, baseline: usize) -> Result<Self> {
        let k = phi.len() + 1;
        if baseline >= k {
            return Err(CmmError::InvalidArgument(format!("baseline {baseline} out of range for k={k}")));
        }
        let mut log_w = Vec::with_capacity(k);
        let mut it = phi.iter();
        for j in 0..k {
            log_w.push(if j == baseline { 0.0 } else { *it.next().unwrap() });
        }
        let lse = crate::logspace::log_sum_exp(&log_w);
        let p = log_w.iter().map(|l| (l - lse).exp()).collect();
        Self::new(m, p, nu)?.with_baseline(baseline)
    }

    pub fn with_baseline(mut self, baseline: usize) -> Result<Self> {
        if baseline >= self.p.len() {
            return Err(CmmError::InvalidArgument(format!(
                "baseline {baseline} out of range for k={}",
                self.p.len()
            )));
        }
        self.baseline = baseline;
        Ok(self)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn baseline(&self) -> usize {
        self.baseline
    }

    /// Odds `p_j / p_baseline` for the non-baseline categories.
    pub fn theta(&self) -> Vec<f64> {
        let pb = self.p[self.baseline];
        self.non_baseline().map(|j| self.p[j] / pb).collect()
    }

    /// Logits `ln(p_j / p_baseline)` for the non-baseline categories.
    pub fn phi(&self) -> Vec<f64> {
        let lb = self.p[self.baseline].ln();
        self.non_baseline().map(|j| self.p[j].ln() - lb).collect()
    }

    /// Natural parameter `(phi, nu)` of the exponential-family form.
    pub fn eta(&self) -> Vec<f64> {
        let mut e = self.phi();
        e.push(self.nu);
        e
    }

    pub fn non_baseline(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.p.len()).filter(move |&j| j != self.baseline)
    }

    fn log_p(&self) -> Vec<f64> {
        self.p.iter().map(|p| p.ln()).collect()
    }
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(CmmError::InvalidArgument(format!("need at least 2 categories, got {}", p.len())));
    }
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0 + SUM_TOL && v.is_finite())) {
        return Err(CmmError::InvalidArgument(format!("probabilities must lie in (0, 1); got {bad}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(CmmError::InvalidArgument(format!("probabilities must sum to 1; sum is {s}")));
    }
    Ok(())
}

fn check_y(y: &CountVector, params: &CmmParams) -> Result<()> {
    if y.k() != params.k() {
        return Err(CmmError::DimensionMismatch(format!(
            "y has {} categories but parameters have {}",
            y.k(),
            params.k()
        )));
    }
    if y.total() != params.m {
        return Err(CmmError::DimensionMismatch(format!(
            "y sums to {} but m = {}",
            y.total(),
            params.m
        )));
    }
    Ok(())
}

/// Visits every point with its unnormalized log mass
/// `nu * ln binom(m; y) + sum y_j log_w_j`.
pub(crate) fn visit_log_terms(log_w: &[f64], nu: f64, m: u32, mut f: impl FnMut(&[u32], f64)) -> Result<()> {
    let k = log_w.len();
    let lf = LnFactorial::new(m);
    let mut it = enumerate_compositions(m, k)?;
    while let Some(y) = it.advance() {
        let mut t = 0.0;
        for (&c, &lw) in y.iter().zip(log_w) {
            if c > 0 {
                t += c as f64 * lw;
            }
        }
        if nu != 0.0 {
            t += nu * lf.ln_multinomial(y);
        }
        f(y, t);
    }
    Ok(())
}

/// `ln sum_y binom(m; y)^nu prod w_j^y_j` for arbitrary positive weights
/// given on the log scale. A single category gives 0.
pub(crate) fn log_norm_const_weights(log_w: &[f64], nu: f64, m: u32) -> Result<f64> {
    if m == 0 {
        return Ok(0.0);
    }
    if log_w.len() == 1 {
        return Ok(m as f64 * log_w[0]);
    }
    let mut acc = LogSumExp::new();
    visit_log_terms(log_w, nu, m, |_, t| acc.push(t))?;
    Ok(acc.value())
}

/// `ln C(p, nu; m)`.
pub fn log_norm_const_c(p: &[f64], nu: f64, m: u32) -> Result<f64> {
    validate_probabilities(p)?;
    let log_w: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    log_norm_const_weights(&log_w, nu, m)
}

/// `ln T(theta, nu; m)` with the baseline category last, `T = C / p_k^m`.
pub fn log_norm_const_t(theta: &[f64], nu: f64, m: u32) -> Result<f64> {
    if theta.is_empty() || theta.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(CmmError::InvalidArgument(format!("odds must be positive and finite: {theta:?}")));
    }
    let mut log_w: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
    log_w.push(0.0);
    log_norm_const_weights(&log_w, nu, m)
}

/// A CMM distribution with its normalizing constant evaluated once.
#[derive(Debug, Clone)]
pub struct Cmm {
    params: CmmParams,
    log_p: Vec<f64>,
    log_c: f64,
}

impl Cmm {
    pub fn new(params: CmmParams) -> Result<Self> {
        let log_p = params.log_p();
        let log_c = log_norm_const_weights(&log_p, params.nu, params.m)?;
        Ok(Self { params, log_p, log_c })
    }

    pub fn params(&self) -> &CmmParams {
        &self.params
    }

    /// `ln C(p, nu; m)`.
    pub fn log_norm_const(&self) -> f64 {
        self.log_c
    }

    pub fn log_pmf(&self, y: &CountVector) -> Result<f64> {
        check_y(y, &self.params)?;
        Ok(self.log_pmf_unchecked(y.counts()))
    }

    pub(crate) fn log_pmf_unchecked(&self, y: &[u32]) -> f64 {
        let mut t = 0.0;
        for (&c, &lp) in y.iter().zip(&self.log_p) {
            if c > 0 {
                t += c as f64 * lp;
            }
        }
        let cv = CountVector::new(y.to_vec()).expect("k >= 2");
        t + self.params.nu * log_multinomial_coeff(&cv) - self.log_c
    }

    /// Every point of the space with its probability, in enumeration order.
    pub fn pmf_table(&self) -> Result<Vec<(CountVector, f64)>> {
        let mut out = Vec::new();
        visit_log_terms(&self.log_p, self.params.nu, self.params.m, |y, t| {
            out.push((CountVector::new(y.to_vec()).expect("k >= 2"), (t - self.log_c).exp()));
        })?;
        Ok(out)
    }
}

/// `ln P(Y = y)`. Recomputes the normalizing constant; use [`Cmm`] for
/// repeated evaluations.
pub fn log_pmf(y: &CountVector, params: &CmmParams) -> Result<f64> {
    check_y(y, params)?;
    Cmm::new(params.clone())?.log_pmf(y)
}

/// Mean vector and covariance matrix of the counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Exact moments by enumeration.
pub fn moments(params: &CmmParams) -> Result<MomentSummary> {
    let k = params.k();
    let mut acc = WeightedMoments::new(k);
    let mut stat = vec![0.0; k];
    visit_log_terms(&params.log_p(), params.nu, params.m, |y, t| {
        for (s, &c) in stat.iter_mut().zip(y) {
            *s = c as f64;
        }
        acc.push(t, &stat);
    })?;
    Ok(MomentSummary {
        mean: DVector::from_column_slice(acc.mean()),
        covariance: DMatrix::from_row_slice(k, k, acc.covariance()),
    })
}

/// Correlations between two distinct trials of the same cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialCorrelation {
    /// Entry `(j, l)` is `Corr(Z_1j, Z_2l)`.
    pub corr: DMatrix<f64>,
    /// `E(Z_i)`, the per-trial category probabilities.
    pub trial_mean: DVector<f64>,
    /// `Cov(Z_i, Z_i')` for `i != i'`.
    pub cross_covariance: DMatrix<f64>,
    /// `Var(Z_i)`.
    pub trial_covariance: DMatrix<f64>,
}

/// Trial-level moments of the dependent-multinoulli representation.
pub fn trial_correlation(params: &CmmParams) -> Result<TrialCorrelation> {
    let m = params.m as f64;
    if params.m < 2 {
        return Err(CmmError::InvalidArgument("trial correlation needs m >= 2".into()));
    }
    let mo = moments(params)?;
    let k = params.k();
    let mu = &mo.mean;
    let trial_mean = mu / m;
    let trial_cov = DMatrix::from_diagonal(&trial_mean) - &trial_mean * trial_mean.transpose();
    // E(Y Y^T) = Var(Y) + mu mu^T
    let second = &mo.covariance + mu * mu.transpose();
    let cross = (second - DMatrix::from_diagonal(mu)) / (m * (m - 1.0)) - mu * mu.transpose() / (m * m);
    let mut corr = DMatrix::zeros(k, k);
    for j in 0..k {
        for l in 0..k {
            let denom = (trial_cov[(j, j)] * trial_cov[(l, l)]).sqrt();
            corr[(j, l)] = if denom > 0.0 { (cross[(j, l)] / denom).clamp(-1.0, 1.0) } else { 0.0 };
        }
    }
    Ok(TrialCorrelation { corr, trial_mean, cross_covariance: cross, trial_covariance: trial_cov })
}

/// Log of the probability generating function, `t_j > 0`.
pub fn log_pgf(t: &[f64], params: &CmmParams) -> Result<f64> {
    if t.len() != params.k() {
        return Err(CmmError::DimensionMismatch(format!("t has {} entries, expected {}", t.len(), params.k())));
    }
    if let Some(bad) = t.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(CmmError::InvalidArgument(format!("pgf arguments must be positive, got {bad}")));
    }
    let log_w: Vec<f64> = t.iter().zip(params.p()).map(|(t, p)| t.ln() + p.ln()).collect();
    Ok(log_norm_const_weights(&log_w, params.nu, params.m)?
        - log_norm_const_weights(&params.log_p(), params.nu, params.m)?)
}

/// Probability generating function `E(prod t_j^Y_j)`.
pub fn pgf(t: &[f64], params: &CmmParams) -> Result<f64> {
    if t.iter().all(|&v| v == 1.0) && t.len() == params.k() {
        return Ok(1.0);
    }
    log_pgf(t, params).map(f64::exp)
}

/// Moment generating function `E(exp(t^T Y))`.
pub fn mgf(t: &[f64], params: &CmmParams) -> Result<f64> {
    if t.len() != params.k() {
        return Err(CmmError::DimensionMismatch(format!("t has {} entries, expected {}", t.len(), params.k())));
    }
    if let Some(bad) = t.iter().find(|v| !v.is_finite()) {
        return Err(CmmError::InvalidArgument(format!("mgf arguments must be finite, got {bad}")));
    }
    let log_w: Vec<f64> = t.iter().zip(params.p()).map(|(t, p)| t + p.ln()).collect();
    let v = log_norm_const_weights(&log_w, params.nu, params.m)?
        - log_norm_const_weights(&params.log_p(), params.nu, params.m)?;
    Ok(v.exp())
}

fn check_index_set(a: &[usize], k: usize, what: &str) -> Result<()> {
    if a.is_empty() {
        return Err(CmmError::InvalidArgument(format!("{what} must be non-empty")));
    }
    if a.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CmmError::InvalidArgument(format!("{what} must be strictly increasing: {a:?}")));
    }
    if *a.last().unwrap() >= k {
        return Err(CmmError::InvalidArgument(format!("{what} has an index out of range for k={k}: {a:?}")));
    }
    Ok(())
}

fn complement(a: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|j| !a.contains(j)).collect()
}

/// `ln C(p_A / p_A^+, nu; n)` for an index block.
fn log_block_const(params: &CmmParams, block: &[usize], n: u32) -> Result<f64> {
    if block.len() < 2 || n == 0 {
        return Ok(0.0);
    }
    let total: f64 = block.iter().map(|&j| params.p[j]).sum();
    let log_w: Vec<f64> = block.iter().map(|&j| (params.p[j] / total).ln()).collect();
    log_norm_const_weights(&log_w, params.nu, n)
}

fn ln_fact(n: u32) -> f64 {
    crate::logspace::ln_factorial(n)
}

/// Log-pmf of the marginal `Y_A` (indices 0-based, strictly increasing).
pub fn marginal_log_pmf(a: &[usize], y_a: &[u32], params: &CmmParams) -> Result<f64> {
    let k = params.k();
    check_index_set(a, k, "A")?;
    if a.len() >= k {
        return Err(CmmError::InvalidArgument("A must be a proper subset of the categories".into()));
    }
    if y_a.len() != a.len() {
        return Err(CmmError::DimensionMismatch(format!("y_A has {} entries, A has {}", y_a.len(), a.len())));
    }
    let used: u32 = y_a.iter().sum();
    if used > params.m {
        return Err(CmmError::InvalidArgument(format!("y_A sums to {used} > m = {}", params.m)));
    }
    let rest = params.m - used;
    let b = complement(a, k);
    let p_b: f64 = b.iter().map(|&j| params.p[j]).sum();
    let log_coef = ln_fact(params.m) - y_a.iter().map(|&c| ln_fact(c)).sum::<f64>() - ln_fact(rest);
    let mut lp = params.nu * log_coef + rest as f64 * p_b.ln();
    for (&j, &c) in a.iter().zip(y_a) {
        lp += c as f64 * params.p[j].ln();
    }
    let log_c = log_norm_const_weights(&params.log_p(), params.nu, params.m)?;
    Ok(lp + log_block_const(params, &b, rest)? - log_c)
}

/// Log-pmf of the block totals `(Y_A1^+, ..., Y_AK^+)` for a partition of
/// the categories.
pub fn grouped_log_pmf(partition: &[Vec<usize>], grouped: &[u32], params: &CmmParams) -> Result<f64> {
    let k = params.k();
    let mut seen = vec![false; k];
    for block in partition {
        check_index_set(block, k, "partition block")?;
        for &j in block {
            if seen[j] {
                return Err(CmmError::InvalidArgument(format!("category {j} appears in two blocks")));
            }
            seen[j] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(CmmError::InvalidArgument("partition does not cover every category".into()));
    }
    if grouped.len() != partition.len() {
        return Err(CmmError::DimensionMismatch(format!(
            "{} grouped counts for {} blocks",
            grouped.len(),
            partition.len()
        )));
    }
    if grouped.iter().sum::<u32>() != params.m {
        return Err(CmmError::DimensionMismatch(format!("grouped counts do not sum to m = {}", params.m)));
    }
    let log_coef = ln_fact(params.m) - grouped.iter().map(|&c| ln_fact(c)).sum::<f64>();
    let mut lp = params.nu * log_coef;
    for (block, &c) in partition.iter().zip(grouped) {
        let pb: f64 = block.iter().map(|&j| params.p[j]).sum();
        lp += c as f64 * pb.ln() + log_block_const(params, block, c)?;
    }
    Ok(lp - log_norm_const_weights(&params.log_p(), params.nu, params.m)?)
}

/// Parameters of `Y_A | Y_B = y_B`, which is again CMM with `m - y_B^+`
/// trials and renormalized probabilities `p_A / p_A^+`.
///
/// `y_b` lists the fixed counts for the complement of `a` in increasing
/// index order.
pub fn conditional_params(a: &[usize], y_b: &[u32], params: &CmmParams) -> Result<CmmParams> {
    let k = params.k();
    check_index_set(a, k, "A")?;
    if a.len() < 2 {
        return Err(CmmError::InvalidArgument(
            "conditioning on all but one category leaves a point mass; A needs at least 2 categories".into(),
        ));
    }
    let b = complement(a, k);
    if y_b.len() != b.len() {
        return Err(CmmError::DimensionMismatch(format!("y_B has {} entries, B has {}", y_b.len(), b.len())));
    }
    if b.is_empty() {
        return Ok(params.clone());
    }
    let fixed: u32 = y_b.iter().sum();
    if fixed >= params.m {
        return Err(CmmError::InvalidArgument(format!(
            "y_B sums to {fixed}, leaving no free trials out of m = {}",
            params.m
        )));
    }
    let total: f64 = a.iter().map(|&j| params.p[j]).sum();
    let mut p: Vec<f64> = a.iter().map(|&j| params.p[j] / total).collect();
    // renormalize away rounding so the sum check holds exactly enough
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    let baseline = a.iter().position(|&j| j == params.baseline).unwrap_or(a.len() - 1);
    CmmParams::new(params.m - fixed, p, params.nu)?.with_baseline(baseline)
}

/// Sufficient statistic `(y_j for j != baseline, -sum ln y_j!)` paired with
/// the natural parameter `(phi, nu)` from [`CmmParams::eta`].
///
/// `ln P(y) = s(y)^T eta + nu ln m! - ln T`.
pub fn sufficient_statistic(y: &CountVector, baseline: usize) -> Vec<f64> {
    let mut s: Vec<f64> = y
        .counts()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != baseline)
        .map(|(_, &c)| c as f64)
        .collect();
    s.push(-y.counts().iter().map(|&c| ln_fact(c)).sum::<f64>());
    s
}
