//! Maximum-likelihood fitting of CMM regression models.
//!
//! Category probabilities follow a baseline-category logit link
//! `ln(p_j / p_base) = x^T beta_j` and the dispersion an identity link
//! `nu = w^T gamma`. Fitting goes through the Poisson-regression form of
//! the likelihood, with one working intercept per distinct covariate cell.

mod cells;
mod fit;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CmmError, Result};
use crate::space::{log_multinomial_coeff, CountVector};

pub use cells::{cmm_loglik, loglik, poisson_loglik, score_and_fim};
pub use fit::{fit_cmm, fit_multinomial, FitOptions, FitResult, IterationRecord, SeConvention};

/// One cluster with its covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: CountVector,
    /// Covariates of the probability link.
    pub x: Vec<f64>,
    /// Covariates of the dispersion link.
    pub w: Vec<f64>,
}

impl Observation {
    pub fn new(y: CountVector, x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.is_empty() || w.is_empty() {
            return Err(CmmError::DimensionMismatch("x and w need at least one entry".into()));
        }
        if let Some(v) = x.iter().chain(&w).find(|v| !v.is_finite()) {
            return Err(CmmError::InvalidArgument(format!("covariates must be finite, got {v}")));
        }
        Ok(Self { y, x, w })
    }

    /// Intercept-only observation.
    pub fn intercept_only(y: CountVector) -> Self {
        Self { y, x: vec![1.0], w: vec![1.0] }
    }

    pub fn m(&self) -> u32 {
        self.y.total()
    }
}

/// A set of observations with consistent dimensions and display names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<Observation>,
    category_names: Vec<String>,
    x_names: Vec<String>,
    w_names: Vec<String>,
}

impl Dataset {
    /// Validates dimensions and assigns default names.
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| CmmError::InvalidArgument("dataset has no observations".into()))?;
        let (k, d1, d2) = (first.y.k(), first.x.len(), first.w.len());
        for (i, o) in observations.iter().enumerate() {
            if o.y.k() != k || o.x.len() != d1 || o.w.len() != d2 {
                return Err(CmmError::DimensionMismatch(format!(
                    "observation {i} has (k, d1, d2) = ({}, {}, {}), expected ({k}, {d1}, {d2})",
                    o.y.k(),
                    o.x.len(),
                    o.w.len()
                )));
            }
            if o.y.total() == 0 {
                return Err(CmmError::InvalidArgument(format!("observation {i} has no trials")));
            }
        }
        Ok(Self {
            category_names: (1..=k).map(|j| format!("cat{j}")).collect(),
            x_names: (1..=d1).map(|j| format!("x{j}")).collect(),
            w_names: (1..=d2).map(|j| format!("w{j}")).collect(),
            observations,
        })
    }

    /// Intercept-only dataset of i.i.d. clusters.
    pub fn iid(ys: Vec<CountVector>) -> Result<Self> {
        let mut ds = Self::new(ys.into_iter().map(Observation::intercept_only).collect())?;
        ds.x_names = vec!["intercept".into()];
        ds.w_names = vec!["intercept".into()];
        Ok(ds)
    }

    pub fn with_names(mut self, categories: Vec<String>, x_names: Vec<String>, w_names: Vec<String>) -> Result<Self> {
        if categories.len() != self.k() || x_names.len() != self.d1() || w_names.len() != self.d2() {
            return Err(CmmError::DimensionMismatch("name lists do not match the data dimensions".into()));
        }
        self.category_names = categories;
        self.x_names = x_names;
        self.w_names = w_names;
        Ok(self)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn k(&self) -> usize {
        self.observations[0].y.k()
    }

    pub fn d1(&self) -> usize {
        self.observations[0].x.len()
    }

    pub fn d2(&self) -> usize {
        self.observations[0].w.len()
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn w_names(&self) -> &[String] {
        &self.w_names
    }

    /// Index of a category by name.
    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.category_names.iter().position(|c| c == name)
    }
}

/// Observations sharing `(m, x, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedCell {
    pub m: u32,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub n: u64,
    /// Occurrence count of each outcome.
    pub counts: BTreeMap<CountVector, u64>,
}

fn cmp_reals(a: &[f64], b: &[f64]) -> Ordering {
    for (u, v) in a.iter().zip(b) {
        // +0 and -0 are the same covariate value
        let o = if u == v { Ordering::Equal } else { u.total_cmp(v) };
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn cmp_key(a: &Observation, b: &Observation) -> Ordering {
    a.m().cmp(&b.m()).then_with(|| cmp_reals(&a.x, &b.x)).then_with(|| cmp_reals(&a.w, &b.w))
}

/// Groups observations by exact `(m, x, w)`. Cells come out in
/// lexicographic order of that tuple.
pub fn collapse(dataset: &Dataset) -> Vec<CollapsedCell> {
    collapse_indexed(dataset).0
}

/// [`collapse`] plus, for each observation, the index of its cell.
pub fn collapse_indexed(dataset: &Dataset) -> (Vec<CollapsedCell>, Vec<usize>) {
    let obs = dataset.observations();
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.sort_by(|&i, &j| cmp_key(&obs[i], &obs[j]));
    let mut cells: Vec<CollapsedCell> = Vec::new();
    let mut cell_of = vec![0; obs.len()];
    let mut prev: Option<usize> = None;
    for i in order {
        let o = &obs[i];
        let same = prev.is_some_and(|p| cmp_key(&obs[p], o) == Ordering::Equal);
        if !same {
            cells.push(CollapsedCell { m: o.m(), x: o.x.clone(), w: o.w.clone(), n: 0, counts: BTreeMap::new() });
        }
        let cell = cells.last_mut().unwrap();
        cell.n += 1;
        *cell.counts.entry(o.y.clone()).or_insert(0) += 1;
        cell_of[i] = cells.len() - 1;
        prev = Some(i);
    }
    (cells, cell_of)
}

/// How the dispersion enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dispersion {
    /// `nu = w^T gamma` with `gamma` estimated.
    Free,
    /// `nu` held at a known value; `gamma` is absent from the parameter vector.
    Fixed(f64),
}

/// Regression coefficients `psi = (beta, gamma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// One vector of length `d1` per non-baseline category, in index order.
    pub betas: Vec<Vec<f64>>,
    /// Dispersion coefficients, length `d2`; empty under a fixed dispersion.
    pub gamma: Vec<f64>,
}

impl Coefficients {
    pub fn nu(&self, w: &[f64], dispersion: Dispersion) -> f64 {
        match dispersion {
            Dispersion::Free => dot(w, &self.gamma),
            Dispersion::Fixed(v) => v,
        }
    }

    /// Logits of the non-baseline categories.
    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        self.betas.iter().map(|b| dot(x, b)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Full Poisson-regression parameter: working intercepts followed by `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub alphas: Vec<f64>,
    pub gamma: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
}

impl ThetaVector {
    pub fn dim(&self) -> usize {
        self.alphas.len() + self.gamma.len() + self.betas.iter().map(Vec::len).sum::<usize>()
    }

    /// Layout `(alphas, gamma, beta_1, ..., beta_{k-1})`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend(&self.alphas);
        v.extend(&self.gamma);
        for b in &self.betas {
            v.extend(b);
        }
        v
    }

    /// Inverse of [`ThetaVector::flatten`].
    pub fn unflatten(flat: &[f64], n_cells: usize, d2: usize, d1: usize, k: usize) -> Result<Self> {
        let expect = n_cells + d2 + (k - 1) * d1;
        if flat.len() != expect {
            return Err(CmmError::DimensionMismatch(format!("theta has {} entries, expected {expect}", flat.len())));
        }
        let alphas = flat[..n_cells].to_vec();
        let gamma = flat[n_cells..n_cells + d2].to_vec();
        let betas = flat[n_cells + d2..].chunks(d1).map(<[f64]>::to_vec).collect();
        Ok(Self { alphas, gamma, betas })
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients { betas: self.betas.clone(), gamma: self.gamma.clone() }
    }
}

/// Poisson-regression covariate of outcome `z` in a cell:
/// `(1, ln binom(m; z) w, z_j x for each non-baseline j)`.
///
/// The leading 1 multiplies the cell's own working intercept.
pub fn sufficient_stats(z: &CountVector, x: &[f64], w: &[f64], baseline: usize) -> Vec<f64> {
    let lb = log_multinomial_coeff(z);
    let mut s = Vec::with_capacity(1 + w.len() + (z.k() - 1) * x.len());
    s.push(1.0);
    s.extend(w.iter().map(|v| v * lb));
    for (j, &c) in z.counts().iter().enumerate() {
        if j != baseline {
            s.extend(x.iter().map(|v| v * c as f64));
        }
    }
    s
}
