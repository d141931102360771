//! One pass over each cell's sample space yields everything the fitter
//! needs: `ln T`, and the mean and covariance of the per-outcome statistic
//! `t(z) = (ln binom(m; z), z_j for non-baseline j)`.
//!
//! The Poisson-regression covariate is a linear image `J t` of that
//! statistic, with `J` built from the cell's `x` and `w`, so the score and
//! information over the full parameter follow from these k-dimensional
//! moments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{collapse, CollapsedCell, Coefficients, Dataset, Dispersion, ThetaVector};
use crate::error::{CmmError, Result};
use crate::logspace::{ln_factorial, LnFactorial, WeightedMoments};
use crate::space::enumerate_compositions;

#[derive(Debug, Clone)]
pub(crate) struct CellEval {
    pub log_t: f64,
    /// `E[t]`
    pub mean: Vec<f64>,
    /// `Cov(t)`, row-major.
    pub cov: Vec<f64>,
    /// Sum of `t(z)` over the observations in the cell.
    pub obs_sum: Vec<f64>,
    /// Sum of the log-linear predictor over the observations in the cell.
    pub obs_term: f64,
}

impl CellEval {
    /// Expected counts for all k categories.
    pub fn expected_counts(&self, m: u32, baseline: usize) -> Vec<f64> {
        let k = self.mean.len();
        let mut out = Vec::with_capacity(k);
        let mut it = self.mean[1..].iter();
        for j in 0..k {
            out.push(if j == baseline { 0.0 } else { *it.next().unwrap() });
        }
        out[baseline] = m as f64 - self.mean[1..].iter().sum::<f64>();
        out
    }
}

/// Shapes shared by every routine in this module.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub k: usize,
    pub d1: usize,
    pub d2: usize,
    pub baseline: usize,
    pub dispersion: Dispersion,
}

impl Layout {
    pub fn from_cells(cells: &[CollapsedCell], baseline: usize, dispersion: Dispersion) -> Result<Self> {
        let first = cells.first().ok_or_else(|| CmmError::InvalidArgument("no cells".into()))?;
        let k = first.counts.keys().next().map(|y| y.k()).unwrap_or(0);
        if baseline >= k {
            return Err(CmmError::InvalidArgument(format!("baseline {baseline} out of range for k={k}")));
        }
        Ok(Self { k, d1: first.x.len(), d2: first.w.len(), baseline, dispersion })
    }

    /// Number of dispersion coefficients in the parameter vector.
    pub fn n_gamma(&self) -> usize {
        match self.dispersion {
            Dispersion::Free => self.d2,
            Dispersion::Fixed(_) => 0,
        }
    }

    pub fn n_psi(&self) -> usize {
        self.n_gamma() + (self.k - 1) * self.d1
    }

    /// For each coefficient, the statistic it multiplies and the covariate
    /// value that scales it in this cell.
    pub fn slots(&self, cell: &CollapsedCell) -> Vec<(usize, f64)> {
        let mut s = Vec::with_capacity(self.n_psi());
        if matches!(self.dispersion, Dispersion::Free) {
            s.extend(cell.w.iter().map(|&v| (0, v)));
        }
        for j in 0..self.k - 1 {
            s.extend(cell.x.iter().map(|&v| (1 + j, v)));
        }
        s
    }

    pub fn check_coefficients(&self, coef: &Coefficients) -> Result<()> {
        if coef.betas.len() != self.k - 1 || coef.betas.iter().any(|b| b.len() != self.d1) {
            return Err(CmmError::DimensionMismatch(format!(
                "expected {} beta vectors of length {}",
                self.k - 1,
                self.d1
            )));
        }
        if coef.gamma.len() != self.n_gamma() {
            return Err(CmmError::DimensionMismatch(format!(
                "expected {} dispersion coefficients, got {}",
                self.n_gamma(),
                coef.gamma.len()
            )));
        }
        Ok(())
    }
}

fn eval_cell(cell: &CollapsedCell, index: usize, coef: &Coefficients, layout: &Layout) -> Result<CellEval> {
    let k = layout.k;
    let b = layout.baseline;
    let nu = coef.nu(&cell.w, layout.dispersion);
    let phi = coef.phi(&cell.x);
    let mut log_w = vec![0.0; k];
    let mut it = phi.iter();
    for (j, lw) in log_w.iter_mut().enumerate() {
        if j != b {
            *lw = *it.next().unwrap();
        }
    }
    let lf = LnFactorial::new(cell.m);
    let stat_and_term = |y: &[u32], t: &mut [f64]| -> f64 {
        let lb = lf.ln_multinomial(y);
        t[0] = lb;
        let mut i = 1;
        let mut term = nu * lb;
        for (j, &c) in y.iter().enumerate() {
            if c > 0 {
                term += c as f64 * log_w[j];
            }
            if j != b {
                t[i] = c as f64;
                i += 1;
            }
        }
        term
    };
    let mut acc = WeightedMoments::new(k);
    let mut t = vec![0.0; k];
    let mut comps = enumerate_compositions(cell.m, k)?;
    while let Some(y) = comps.advance() {
        let term = stat_and_term(y, &mut t);
        if !term.is_finite() {
            return Err(CmmError::NonFiniteRate { cell: index, z: y.to_vec() });
        }
        acc.push(term, &t);
    }
    let log_t = acc.log_total();
    if !log_t.is_finite() {
        return Err(CmmError::NonFiniteRate { cell: index, z: Vec::new() });
    }
    let mut obs_sum = vec![0.0; k];
    let mut obs_term = 0.0;
    for (z, &cnt) in &cell.counts {
        let term = stat_and_term(z.counts(), &mut t);
        obs_term += cnt as f64 * term;
        for (s, v) in obs_sum.iter_mut().zip(&t) {
            *s += cnt as f64 * v;
        }
    }
    Ok(CellEval { log_t, mean: acc.mean().to_vec(), cov: acc.covariance().to_vec(), obs_sum, obs_term })
}

/// Evaluates every cell, in parallel, preserving cell order.
pub(crate) fn evaluate(cells: &[CollapsedCell], coef: &Coefficients, layout: &Layout) -> Result<Vec<CellEval>> {
    layout.check_coefficients(coef)?;
    cells.par_iter().enumerate().map(|(i, c)| eval_cell(c, i, coef, layout)).collect()
}

/// Log-likelihood of the original model given the cell evaluations.
pub(crate) fn loglik_from(cells: &[CollapsedCell], evals: &[CellEval]) -> f64 {
    cells.iter().zip(evals).map(|(c, e)| e.obs_term - c.n as f64 * e.log_t).sum()
}

/// Score and information of the Poisson form at working intercepts `alphas`.
pub(crate) fn assemble(
    cells: &[CollapsedCell],
    evals: &[CellEval],
    alphas: &[f64],
    layout: &Layout,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let nc = cells.len();
    let p = layout.n_psi();
    let k = layout.k;
    let mut score = DVector::zeros(nc + p);
    let mut fim = DMatrix::zeros(nc + p, nc + p);
    for (d, (cell, e)) in cells.iter().zip(evals).enumerate() {
        let c = cell.n as f64 * (alphas[d] + e.log_t).exp();
        if !c.is_finite() {
            return Err(CmmError::NonFiniteRate { cell: d, z: Vec::new() });
        }
        let slots = layout.slots(cell);
        score[d] = cell.n as f64 - c;
        fim[(d, d)] = c;
        for (q, &(s, v)) in slots.iter().enumerate() {
            score[nc + q] += v * (e.obs_sum[s] - c * e.mean[s]);
            let cross = c * v * e.mean[s];
            fim[(d, nc + q)] = cross;
            fim[(nc + q, d)] = cross;
            for (r, &(s2, v2)) in slots.iter().enumerate().take(q + 1) {
                let second = e.cov[s * k + s2] + e.mean[s] * e.mean[s2];
                let add = c * v * v2 * second;
                fim[(nc + q, nc + r)] += add;
                if r != q {
                    fim[(nc + r, nc + q)] += add;
                }
            }
        }
    }
    Ok((score, fim))
}

/// Information about `psi` at profiled intercepts: the centered form
/// `sum n J Cov(t) J^T` and the uncentered `sum n J E[t t^T] J^T`.
pub(crate) fn psi_information(
    cells: &[CollapsedCell],
    evals: &[CellEval],
    layout: &Layout,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = layout.n_psi();
    let k = layout.k;
    let mut centered = DMatrix::zeros(p, p);
    let mut raw = DMatrix::zeros(p, p);
    for (cell, e) in cells.iter().zip(evals) {
        let n = cell.n as f64;
        let slots = layout.slots(cell);
        for (q, &(s, v)) in slots.iter().enumerate() {
            for (r, &(s2, v2)) in slots.iter().enumerate() {
                let cv = e.cov[s * k + s2];
                centered[(q, r)] += n * v * v2 * cv;
                raw[(q, r)] += n * v * v2 * (cv + e.mean[s] * e.mean[s2]);
            }
        }
    }
    (centered, raw)
}

fn coefficients_of(theta: &ThetaVector) -> Coefficients {
    theta.coefficients()
}

/// Score vector and Fisher information of the Poisson-regression form,
/// both laid out as [`ThetaVector::flatten`].
pub fn score_and_fim(
    theta: &ThetaVector,
    cells: &[CollapsedCell],
    baseline: usize,
    dispersion: Dispersion,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let layout = Layout::from_cells(cells, baseline, dispersion)?;
    if theta.alphas.len() != cells.len() {
        return Err(CmmError::DimensionMismatch(format!(
            "{} intercepts for {} cells",
            theta.alphas.len(),
            cells.len()
        )));
    }
    let evals = evaluate(cells, &coefficients_of(theta), &layout)?;
    assemble(cells, &evals, &theta.alphas, &layout)
}

/// Poisson-regression log-likelihood, including the `ln N!` terms.
pub fn poisson_loglik(
    theta: &ThetaVector,
    cells: &[CollapsedCell],
    baseline: usize,
    dispersion: Dispersion,
) -> Result<f64> {
    let layout = Layout::from_cells(cells, baseline, dispersion)?;
    if theta.alphas.len() != cells.len() {
        return Err(CmmError::DimensionMismatch("one intercept per cell is required".into()));
    }
    let evals = evaluate(cells, &coefficients_of(theta), &layout)?;
    let mut ll = 0.0;
    for ((cell, e), &a) in cells.iter().zip(&evals).zip(&theta.alphas) {
        let n = cell.n as f64;
        ll += e.obs_term + n * (n.ln() + a) - n * (a + e.log_t).exp();
        ll -= cell.counts.values().map(|&c| ln_factorial(c as u32)).sum::<f64>();
    }
    Ok(ll)
}

/// Log-likelihood of the CMM regression model.
pub fn loglik(coef: &Coefficients, dataset: &Dataset, baseline: usize, dispersion: Dispersion) -> Result<f64> {
    let cells = collapse(dataset);
    let layout = Layout::from_cells(&cells, baseline, dispersion)?;
    let evals = evaluate(&cells, coef, &layout)?;
    Ok(loglik_from(&cells, &evals))
}

/// Log-likelihood with the dispersion link free.
pub fn cmm_loglik(coef: &Coefficients, dataset: &Dataset, baseline: usize) -> Result<f64> {
    loglik(coef, dataset, baseline, Dispersion::Free)
}
