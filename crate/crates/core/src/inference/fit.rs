use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cells::{assemble, evaluate, loglik_from, psi_information, CellEval, Layout};
use super::{collapse_indexed, Coefficients, Dataset, Dispersion, Observation, ThetaVector};
use crate::dist::CmmParams;
use crate::error::{CmmError, Result};

/// Which block of the information matrix yields standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeConvention {
    /// Invert the full information, then take the coefficient block.
    /// Equals the inverse of the profile information about `psi`.
    InvertThenExtract,
    /// Delete the intercept rows and columns, then invert what is left.
    DropThenInvert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Baseline category; defaults to the last one.
    pub baseline: Option<usize>,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Bound on the largest absolute score component at convergence.
    pub score_tolerance: f64,
    /// Bound on the largest absolute Newton step component at convergence.
    pub step_tolerance: f64,
    /// Fits whose coefficients leave `[-boundary, boundary]` stop and are
    /// flagged as running off to the edge of the parameter space.
    pub boundary: f64,
    pub se_convention: SeConvention,
    /// Starting coefficients; a pooled-proportion start with `nu = 1` otherwise.
    pub start: Option<Coefficients>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            baseline: None,
            max_iterations: 200,
            max_halvings: 20,
            score_tolerance: 1e-8,
            step_tolerance: 1e-8,
            boundary: 1e3,
            se_convention: SeConvention::InvertThenExtract,
            start: None,
        }
    }
}

/// One accepted Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub loglik: f64,
    pub halvings: usize,
    pub max_abs_score: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub dispersion: Dispersion,
    pub baseline: usize,
    pub coefficients: Coefficients,
    /// Working intercepts, one per collapsed cell.
    pub alpha_hat: Vec<f64>,
    /// Standard errors under [`FitResult::se_convention`], ordered as [`FitResult::psi_hat`].
    pub std_errors: Option<Vec<f64>>,
    pub se_convention: SeConvention,
    pub se_invert_then_extract: Option<Vec<f64>>,
    pub se_drop_then_invert: Option<Vec<f64>>,
    pub loglik: f64,
    pub aic: f64,
    /// Regression coefficients counted for the AIC; intercepts excluded.
    pub n_parameters: usize,
    /// Information over the full parameter, laid out as [`ThetaVector::flatten`].
    pub fim: DMatrix<f64>,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub boundary: bool,
    pub max_abs_score: f64,
    /// Fitted `E(Y_i)` for each observation, in dataset order.
    pub expected_counts: Vec<Vec<f64>>,
    pub n_cells: usize,
}

impl FitResult {
    /// `(beta_1, ..., beta_{k-1}, gamma)` flattened.
    pub fn psi_hat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.coefficients.betas.iter().flatten().copied().collect();
        v.extend(&self.coefficients.gamma);
        v
    }

    pub fn theta_hat(&self) -> ThetaVector {
        ThetaVector {
            alphas: self.alpha_hat.clone(),
            gamma: self.coefficients.gamma.clone(),
            betas: self.coefficients.betas.clone(),
        }
    }

    pub fn nu_hat(&self, w: &[f64]) -> f64 {
        self.coefficients.nu(w, self.dispersion)
    }

    /// The fitted distribution of one observation.
    pub fn fitted_params(&self, obs: &Observation) -> Result<CmmParams> {
        CmmParams::from_logits(obs.m(), &self.coefficients.phi(&obs.x), self.nu_hat(&obs.w), self.baseline)
    }
}

/// Starting values: logits from pooled proportions, `nu = 1` where the
/// dispersion design has an intercept column.
fn initial_coefficients(dataset: &Dataset, baseline: usize, dispersion: Dispersion) -> Coefficients {
    let k = dataset.k();
    let obs = dataset.observations();
    let x_int = (0..dataset.d1()).find(|&c| obs.iter().all(|o| o.x[c] == 1.0));
    let w_int = (0..dataset.d2()).find(|&c| obs.iter().all(|o| o.w[c] == 1.0));
    let mut totals = vec![0.5; k];
    for o in obs {
        for (t, &c) in totals.iter_mut().zip(o.y.counts()) {
            *t += c as f64;
        }
    }
    let betas = (0..k)
        .filter(|&j| j != baseline)
        .map(|j| {
            let mut b = vec![0.0; dataset.d1()];
            if let Some(c) = x_int {
                b[c] = (totals[j] / totals[baseline]).ln();
            }
            b
        })
        .collect();
    let gamma = match dispersion {
        Dispersion::Fixed(_) => Vec::new(),
        Dispersion::Free => {
            let mut g = vec![0.0; dataset.d2()];
            if let Some(c) = w_int {
                g[c] = 1.0;
            }
            g
        }
    };
    Coefficients { betas, gamma }
}

fn step_coefficients(coef: &Coefficients, delta: &[f64], scale: f64) -> Coefficients {
    let mut out = coef.clone();
    let ng = out.gamma.len();
    for (g, d) in out.gamma.iter_mut().zip(delta) {
        *g += scale * d;
    }
    let mut i = ng;
    for b in &mut out.betas {
        for v in b.iter_mut() {
            *v += scale * delta[i];
            i += 1;
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Standard errors from the inverse of a positive-definite matrix, or
/// `None` when it is not positive definite.
fn se_from(info: DMatrix<f64>) -> Option<Vec<f64>> {
    let chol = info.cholesky()?;
    let inv = chol.inverse();
    let se: Vec<f64> = inv.diagonal().iter().map(|v| v.sqrt()).collect();
    se.iter().all(|v| v.is_finite()).then_some(se)
}

/// Reorders an internal `(gamma, betas)` vector to `(betas, gamma)`.
fn public_order(v: &[f64], n_gamma: usize) -> Vec<f64> {
    let mut out = v[n_gamma..].to_vec();
    out.extend(&v[..n_gamma]);
    out
}

fn fit(dataset: &Dataset, dispersion: Dispersion, opts: &FitOptions) -> Result<FitResult> {
    let k = dataset.k();
    let baseline = opts.baseline.unwrap_or(k - 1);
    if baseline >= k {
        return Err(CmmError::InvalidArgument(format!("baseline {baseline} out of range for k={k}")));
    }
    if let Dispersion::Fixed(v) = dispersion {
        if !v.is_finite() {
            return Err(CmmError::InvalidArgument(format!("fixed dispersion must be finite, got {v}")));
        }
    }
    let (cells, cell_of) = collapse_indexed(dataset);
    let layout = Layout::from_cells(&cells, baseline, dispersion)?;
    let nc = cells.len();
    let mut coef = match &opts.start {
        Some(c) => c.clone(),
        None => initial_coefficients(dataset, baseline, dispersion),
    };
    let mut evals = evaluate(&cells, &coef, &layout)?;
    let profile = |ev: &[CellEval]| -> Vec<f64> { ev.iter().map(|e| -e.log_t).collect() };
    let mut alphas = profile(&evals);
    let mut ll = loglik_from(&cells, &evals);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut boundary = false;

    for _ in 0..opts.max_iterations {
        let (score, fim) = assemble(&cells, &evals, &alphas, &layout)?;
        let max_score = score.amax();
        let chol = fim.cholesky().ok_or_else(|| {
            CmmError::SingularInformation(format!(
                "information matrix is not positive definite at loglik {ll}; check for collinear covariates"
            ))
        })?;
        let delta: DVector<f64> = chol.solve(&score);
        let step = delta.amax();
        if max_score < opts.score_tolerance && step < opts.step_tolerance {
            converged = true;
            break;
        }
        let dpsi = &delta.as_slice()[nc..];
        let mut scale = 1.0;
        let mut accepted = None;
        for h in 0..=opts.max_halvings {
            let cand = step_coefficients(&coef, dpsi, scale);
            match evaluate(&cells, &cand, &layout) {
                Ok(ev) => {
                    let cand_ll = loglik_from(&cells, &ev);
                    if cand_ll >= ll {
                        accepted = Some((cand, ev, cand_ll, h));
                        break;
                    }
                }
                Err(CmmError::NonFiniteRate { .. }) => {}
                Err(e) => return Err(e),
            }
            scale *= 0.5;
        }
        let Some((cand, ev, cand_ll, halvings)) = accepted else {
            // no ascent possible: either at a numerical plateau or stuck
            converged = step * scale * 2.0 < opts.step_tolerance || step < opts.step_tolerance;
            break;
        };
        coef = cand;
        evals = ev;
        alphas = profile(&evals);
        ll = cand_ll;
        trace.push(IterationRecord { loglik: ll, halvings, max_abs_score: max_score });
        let psi_max = max_abs(&coef.gamma).max(coef.betas.iter().map(|b| max_abs(b)).fold(0.0, f64::max));
        if psi_max > opts.boundary || !ll.is_finite() {
            boundary = true;
            break;
        }
    }

    let (score, fim) = assemble(&cells, &evals, &alphas, &layout)?;
    let ng = layout.n_gamma();
    let (centered, raw) = psi_information(&cells, &evals, &layout);
    let se_ite = se_from(centered).map(|v| public_order(&v, ng));
    let se_dti = se_from(raw).map(|v| public_order(&v, ng));
    let std_errors = match opts.se_convention {
        SeConvention::InvertThenExtract => se_ite.clone(),
        SeConvention::DropThenInvert => se_dti.clone(),
    };
    let n_parameters = layout.n_psi();
    let expected_counts = dataset
        .observations()
        .iter()
        .zip(&cell_of)
        .map(|(o, &c)| evals[c].expected_counts(o.m(), baseline))
        .collect();
    Ok(FitResult {
        dispersion,
        baseline,
        coefficients: coef,
        alpha_hat: alphas,
        std_errors,
        se_convention: opts.se_convention,
        se_invert_then_extract: se_ite,
        se_drop_then_invert: se_dti,
        loglik: ll,
        aic: -2.0 * ll + 2.0 * n_parameters as f64,
        n_parameters,
        fim,
        iterations: trace,
        converged: converged && !boundary,
        boundary,
        max_abs_score: score.amax(),
        expected_counts,
        n_cells: nc,
    })
}

/// Fits the CMM regression with `nu = w^T gamma`.
pub fn fit_cmm(dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    fit(dataset, Dispersion::Free, options)
}

/// Fits the multinomial-logit model, i.e. the CMM model with `nu = 1`.
pub fn fit_multinomial(dataset: &Dataset, options: &FitOptions) -> Result<FitResult> {
    let mut opts = options.clone();
    if let Some(start) = &mut opts.start {
        start.gamma.clear();
    }
    fit(dataset, Dispersion::Fixed(1.0), &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::CountVector;

    fn cv(v: &[u32]) -> CountVector {
        CountVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn binomial_like_data_gives_unit_dispersion() {
        let ds = Dataset::iid(vec![cv(&[2, 0]), cv(&[1, 1]), cv(&[1, 1]), cv(&[0, 2])]).unwrap();
        let fit = fit_cmm(&ds, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.betas[0][0].abs() < 1e-8);
        assert!((fit.coefficients.gamma[0] - 1.0).abs() < 1e-8);
        assert_eq!(fit.n_parameters, 2);
    }

    #[test]
    fn multinomial_matches_pooled_proportions() {
        let ds = Dataset::iid(vec![cv(&[2, 1, 0]), cv(&[0, 1, 2]), cv(&[3, 0, 0]), cv(&[1, 1, 1])]).unwrap();
        let fit = fit_multinomial(&ds, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        // pooled counts (6, 3, 3)
        let phi = fit.coefficients.phi(&[1.0]);
        assert!((phi[0] - 2f64.ln()).abs() < 1e-8);
        assert!(phi[1].abs() < 1e-8);
        assert_eq!(fit.n_parameters, 2);
        assert!(fit.coefficients.gamma.is_empty());
    }

    #[test]
    fn intercepts_are_minus_log_t() {
        let ds = Dataset::iid(vec![cv(&[2, 1, 0]), cv(&[0, 1, 2]), cv(&[3, 0, 0]), cv(&[0, 0, 3])]).unwrap();
        let fit = fit_cmm(&ds, &FitOptions::default()).unwrap();
        let phi = fit.coefficients.phi(&[1.0]);
        let theta: Vec<f64> = phi.iter().map(|v| v.exp()).collect();
        let lt = crate::dist::log_norm_const_t(&theta, fit.nu_hat(&[1.0]), 3).unwrap();
        assert!((fit.alpha_hat[0] + lt).abs() < 1e-8);
    }

    #[test]
    fn collinear_design_reports_singularity() {
        let obs = (0..4)
            .map(|i| Observation::new(cv(&[i, 3 - i]), vec![1.0, 2.0], vec![1.0]).unwrap())
            .collect();
        let ds = Dataset::new(obs).unwrap();
        assert!(matches!(fit_cmm(&ds, &FitOptions::default()), Err(CmmError::SingularInformation(_))));
    }
}
