//! Model-assessment statistics and the simulation study of the MLE's
//! sampling distribution.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::CmmParams;
use crate::error::{CmmError, Result};
use crate::inference::{fit_cmm, Dataset, FitOptions};
use crate::logspace::{LnFactorial, WeightedMoments};
use crate::sampler::{GibbsSampler, RandomSource};
use crate::space::enumerate_compositions;

/// Replicates whose quadratic form reaches this value count as extreme.
pub const LARGE_Q: f64 = 30.0;

/// `(eta_hat - eta)^T I (eta_hat - eta)`.
pub fn quadratic_form(eta_hat: &[f64], eta_true: &[f64], fim: &DMatrix<f64>) -> Result<f64> {
    let d = eta_hat.len();
    if eta_true.len() != d || fim.nrows() != d || fim.ncols() != d {
        return Err(CmmError::DimensionMismatch(format!(
            "eta_hat has {d} entries, eta has {}, information is {}x{}",
            eta_true.len(),
            fim.nrows(),
            fim.ncols()
        )));
    }
    let diff = DVector::from_iterator(d, eta_hat.iter().zip(eta_true).map(|(a, b)| a - b));
    Ok((diff.transpose() * fim * &diff)[(0, 0)])
}

/// Fisher information about `eta = (phi, nu)` carried by `n` i.i.d. clusters:
/// `n` times the covariance of `(y_j for non-baseline j, ln binom(m; y))`.
pub fn eta_information(params: &CmmParams, n: usize) -> Result<DMatrix<f64>> {
    let k = params.k();
    let base = params.baseline();
    let lf = LnFactorial::new(params.m());
    let log_p: Vec<f64> = params.p().iter().map(|p| p.ln()).collect();
    let mut acc = WeightedMoments::new(k);
    let mut t = vec![0.0; k];
    let mut it = enumerate_compositions(params.m(), k)?;
    while let Some(y) = it.advance() {
        let lb = lf.ln_multinomial(y);
        let mut term = params.nu() * lb;
        let mut i = 0;
        for (j, &c) in y.iter().enumerate() {
            term += c as f64 * log_p[j];
            if j != base {
                t[i] = c as f64;
                i += 1;
            }
        }
        t[k - 1] = lb;
        acc.push(term, &t);
    }
    Ok(DMatrix::from_row_slice(k, k, acc.covariance()) * n as f64)
}

/// Residual sum of squares `sum_i sum_j (y_ij - E_ij)^2`.
pub fn rss(dataset: &Dataset, expected: &[Vec<f64>]) -> Result<f64> {
    if expected.len() != dataset.len() {
        return Err(CmmError::DimensionMismatch(format!(
            "{} expected rows for {} observations",
            expected.len(),
            dataset.len()
        )));
    }
    let mut total = 0.0;
    for (o, e) in dataset.observations().iter().zip(expected) {
        if e.len() != o.y.k() {
            return Err(CmmError::DimensionMismatch(format!("expected row has {} entries, k = {}", e.len(), o.y.k())));
        }
        total += o.y.counts().iter().zip(e).map(|(&y, &f)| (y as f64 - f).powi(2)).sum::<f64>();
    }
    Ok(total)
}

/// Kolmogorov-Smirnov distance between the empirical cdf of `samples` and
/// a continuous reference cdf.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(CmmError::InvalidArgument("no samples".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(CmmError::InvalidArgument("samples contain NaN".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        // the empirical cdf jumps from i/n to j/n at a run of tied values
        let mut j = i;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        let f = cdf(s[i]);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

/// Cdf of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    ChiSquared::new(df).expect("df > 0").cdf(x)
}

/// A replicated simulation of the MLE under known parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub true_params: CmmParams,
    /// Clusters per replicate.
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Gibbs sweeps per simulated cluster; each cluster has its own chain.
    pub burn_in: usize,
}

impl StudyConfig {
    pub fn new(true_params: CmmParams, n: usize, replicates: usize, seed: u64) -> Result<Self> {
        let c = Self { true_params, n, replicates, seed, burn_in: 2000 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(CmmError::InvalidArgument("need at least one replicate".into()));
        }
        if self.n < 2 {
            return Err(CmmError::InvalidArgument("need at least two clusters per replicate".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplicateStatus {
    Converged,
    /// Iteration limit reached; `eta_hat` is the last iterate.
    NotConverged,
    /// Coefficients ran past the boundary bound.
    Boundary,
    /// The fit stopped with an error; `q` is recorded as infinite.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub q: f64,
    pub eta_hat: Vec<f64>,
    pub status: ReplicateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub replicates: usize,
    /// Replicates with `q >= 30`, any status.
    pub n_large_q: usize,
    pub n_converged: usize,
    pub n_not_converged: usize,
    pub n_boundary: usize,
    pub n_failed: usize,
    /// KS distance between the finite `q` values and chi-square with `k` df.
    pub ks_chi_square: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub replicates: Vec<Replicate>,
    pub summary: StudySummary,
}

impl StudyResult {
    pub fn q_values(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.q).collect()
    }
}

fn run_replicate(
    config: &StudyConfig,
    sampler: &GibbsSampler,
    fim: &DMatrix<f64>,
    eta: &[f64],
    r: usize,
) -> Result<Replicate> {
    let mut rng = RandomSource::new(config.seed).split(r as u64);
    let draws = sampler.independent_draws(config.n, config.burn_in, &mut rng)?;
    let data = Dataset::iid(draws)?;
    let opts = FitOptions { baseline: Some(config.true_params.baseline()), ..FitOptions::default() };
    match fit_cmm(&data, &opts) {
        Ok(fit) => {
            let mut eta_hat: Vec<f64> = fit.coefficients.betas.iter().map(|b| b[0]).collect();
            eta_hat.push(fit.coefficients.gamma[0]);
            let q = quadratic_form(&eta_hat, eta, fim)?;
            let status = if fit.boundary {
                ReplicateStatus::Boundary
            } else if fit.converged {
                ReplicateStatus::Converged
            } else {
                ReplicateStatus::NotConverged
            };
            Ok(Replicate { q, eta_hat, status })
        }
        Err(e) => Ok(Replicate { q: f64::INFINITY, eta_hat: Vec::new(), status: ReplicateStatus::Failed(e.to_string()) }),
    }
}

/// Simulates `replicates` i.i.d. samples of size `n`, fits each, and
/// records the quadratic form against the truth.
///
/// Replicate `r` draws from stream `r` of the study seed, so results do
/// not depend on scheduling.
pub fn run_consistency_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let params = &config.true_params;
    let sampler = GibbsSampler::new(params)?;
    let fim = eta_information(params, config.n)?;
    let eta = params.eta();
    let replicates: Vec<Replicate> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, &sampler, &fim, &eta, r))
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&Replicate) -> bool| replicates.iter().filter(|r| f(r)).count();
    let df = params.k();
    let finite: Vec<f64> = replicates.iter().map(|r| r.q).filter(|q| q.is_finite()).collect();
    let ks = if finite.is_empty() { 1.0 } else { ks_distance(&finite, |x| chi_square_cdf(x, df as f64))? };
    let summary = StudySummary {
        replicates: replicates.len(),
        n_large_q: count(&|r| r.q >= LARGE_Q),
        n_converged: count(&|r| r.status == ReplicateStatus::Converged),
        n_not_converged: count(&|r| r.status == ReplicateStatus::NotConverged),
        n_boundary: count(&|r| r.status == ReplicateStatus::Boundary),
        n_failed: count(&|r| matches!(r.status, ReplicateStatus::Failed(_))),
        ks_chi_square: ks,
        df,
    };
    Ok(StudyResult { replicates, summary })
}
