//! CSV ingestion and the JSON fit report.
//!
//! A data file has a header row. Columns prefixed `y_` hold category
//! counts (the suffix names the category), `x_` columns are covariates of
//! the probability link and `w_` columns covariates of the dispersion
//! link. Any other column is carried along and ignored.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{rss, StudyConfig};
use crate::dist::CmmParams;
use crate::error::{CmmError, Result};
use crate::inference::{Dataset, Dispersion, FitResult, Observation, SeConvention};
use crate::space::CountVector;

/// Name given to the column of ones prepended to a design.
pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub intercept_x: bool,
    pub intercept_w: bool,
    /// Dispersion covariates to keep, by name with or without the `w_`
    /// prefix. `None` keeps every `w_` column.
    pub w_columns: Option<Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { intercept_x: true, intercept_w: true, w_columns: None }
    }
}

fn parse_count(raw: &str, row: usize, column: &str) -> Result<u32> {
    let s = raw.trim();
    let err = |message: String| CmmError::Data { row, column: column.to_string(), message };
    if s.starts_with('-') {
        return Err(err(format!("negative count {s:?}")));
    }
    s.parse::<u32>().map_err(|_| err(format!("expected a non-negative integer count, got {s:?}")))
}

fn parse_real(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CmmError::Data { row, column: column.to_string(), message: format!("expected a finite number, got {s:?}") }),
    }
}

/// Reads a dataset from CSV text. Rows are numbered from 1 after the header.
pub fn read_csv(reader: impl Read, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CmmError::DataFormat(format!("cannot read header: {e}")))?.clone();
    let mut y_cols = Vec::new();
    let mut x_cols = Vec::new();
    let mut w_all = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(name) = h.strip_prefix("y_") {
            y_cols.push((i, name.to_string()));
        } else if let Some(name) = h.strip_prefix("x_") {
            x_cols.push((i, name.to_string()));
        } else if let Some(name) = h.strip_prefix("w_") {
            w_all.push((i, name.to_string()));
        }
    }
    if y_cols.len() < 2 {
        return Err(CmmError::DataFormat(format!("need at least two y_ count columns, found {}", y_cols.len())));
    }
    let w_cols = match &options.w_columns {
        None => w_all,
        Some(sel) => sel
            .iter()
            .map(|s| {
                let name = s.strip_prefix("w_").unwrap_or(s);
                w_all
                    .iter()
                    .find(|(_, n)| n == name)
                    .cloned()
                    .ok_or_else(|| CmmError::DataFormat(format!("dispersion column w_{name} not found")))
            })
            .collect::<Result<_>>()?,
    };
    let mut x_names: Vec<String> = Vec::new();
    if options.intercept_x {
        x_names.push(INTERCEPT.into());
    }
    x_names.extend(x_cols.iter().map(|(_, n)| n.clone()));
    let mut w_names: Vec<String> = Vec::new();
    if options.intercept_w {
        w_names.push(INTERCEPT.into());
    }
    w_names.extend(w_cols.iter().map(|(_, n)| n.clone()));
    if x_names.is_empty() || w_names.is_empty() {
        return Err(CmmError::DataFormat("each link needs at least one covariate or an intercept".into()));
    }

    let mut obs = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| CmmError::DataFormat(format!("row {row}: {e}")))?;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let counts = y_cols
            .iter()
            .map(|(i, n)| parse_count(cell(*i), row, &format!("y_{n}")))
            .collect::<Result<Vec<u32>>>()?;
        if counts.iter().all(|&c| c == 0) {
            return Err(CmmError::Data { row, column: "y_*".into(), message: "row has no trials".into() });
        }
        let mut x: Vec<f64> = if options.intercept_x { vec![1.0] } else { Vec::new() };
        for (i, n) in &x_cols {
            x.push(parse_real(cell(*i), row, &format!("x_{n}"))?);
        }
        let mut w: Vec<f64> = if options.intercept_w { vec![1.0] } else { Vec::new() };
        for (i, n) in &w_cols {
            w.push(parse_real(cell(*i), row, &format!("w_{n}"))?);
        }
        obs.push(Observation { y: CountVector::new(counts)?, x, w });
    }
    if obs.is_empty() {
        return Err(CmmError::DataFormat("file has no data rows".into()));
    }
    Dataset::new(obs)?.with_names(y_cols.into_iter().map(|(_, n)| n).collect(), x_names, w_names)
}

/// Reads a dataset from a CSV file.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| CmmError::Io(format!("{}: {e}", path.display())))?;
    read_csv(f, options)
}

/// Writes a dataset as CSV. Intercept columns are left implicit.
pub fn write_csv(dataset: &Dataset, writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CmmError::Io(e.to_string());
    let keep = |names: &[String]| -> Vec<usize> { (0..names.len()).filter(|&i| names[i] != INTERCEPT).collect() };
    let xs = keep(dataset.x_names());
    let ws = keep(dataset.w_names());
    let mut header: Vec<String> = dataset.category_names().iter().map(|c| format!("y_{c}")).collect();
    header.extend(xs.iter().map(|&i| format!("x_{}", dataset.x_names()[i])));
    header.extend(ws.iter().map(|&i| format!("w_{}", dataset.w_names()[i])));
    wtr.write_record(&header).map_err(io)?;
    for o in dataset.observations() {
        let mut rec: Vec<String> = o.y.counts().iter().map(u32::to_string).collect();
        rec.extend(xs.iter().map(|&i| o.x[i].to_string()));
        rec.extend(ws.iter().map(|&i| o.w[i].to_string()));
        wtr.write_record(&rec).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a dataset to a CSV file.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| CmmError::Io(format!("{}: {e}", path.display())))?;
    write_csv(dataset, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Cmm,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientBlock {
    /// Logit of a category against the baseline.
    Beta,
    /// Dispersion link.
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub name: String,
    pub block: CoefficientBlock,
    /// Category for `beta` rows; absent for `gamma`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<String>,
    pub covariate: String,
    pub estimate: f64,
    /// Absent when the information matrix is not positive definite.
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    pub boundary: bool,
    pub max_abs_score: f64,
    /// Log-likelihood after each accepted step.
    pub loglik_trace: Vec<f64>,
    /// Step halvings taken at each accepted step.
    pub halvings: Vec<usize>,
}

/// Serializable summary of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelTag,
    pub categories: Vec<String>,
    pub baseline: String,
    pub n_observations: usize,
    pub n_cells: usize,
    pub se_convention: SeConvention,
    pub coefficients: Vec<CoefficientReport>,
    pub loglik: f64,
    pub aic: f64,
    pub n_parameters: usize,
    pub rss: f64,
    pub expected_counts: Vec<Vec<f64>>,
    pub convergence: ConvergenceReport,
}

impl FitReport {
    pub fn new(fit: &FitResult, dataset: &Dataset) -> Result<Self> {
        let model = match fit.dispersion {
            Dispersion::Free => ModelTag::Cmm,
            Dispersion::Fixed(_) => ModelTag::Multinomial,
        };
        let cats = dataset.category_names();
        let est = fit.psi_hat();
        let se = fit.std_errors.clone();
        let mut coefficients = Vec::with_capacity(est.len());
        let mut i = 0;
        for (j, cat) in cats.iter().enumerate() {
            if j == fit.baseline {
                continue;
            }
            for xn in dataset.x_names() {
                coefficients.push(CoefficientReport {
                    name: format!("{cat}:{xn}"),
                    block: CoefficientBlock::Beta,
                    category: Some(cat.clone()),
                    covariate: xn.clone(),
                    estimate: est[i],
                    std_error: se.as_ref().map(|s| s[i]),
                });
                i += 1;
            }
        }
        if model == ModelTag::Cmm {
            for wn in dataset.w_names() {
                coefficients.push(CoefficientReport {
                    name: format!("nu:{wn}"),
                    block: CoefficientBlock::Gamma,
                    category: None,
                    covariate: wn.clone(),
                    estimate: est[i],
                    std_error: se.as_ref().map(|s| s[i]),
                });
                i += 1;
            }
        }
        Ok(Self {
            model,
            categories: cats.to_vec(),
            baseline: cats[fit.baseline].clone(),
            n_observations: dataset.len(),
            n_cells: fit.n_cells,
            se_convention: fit.se_convention,
            coefficients,
            loglik: fit.loglik,
            aic: fit.aic,
            n_parameters: fit.n_parameters,
            rss: rss(dataset, &fit.expected_counts)?,
            expected_counts: fit.expected_counts.clone(),
            convergence: ConvergenceReport {
                iterations: fit.iterations.len(),
                converged: fit.converged,
                boundary: fit.boundary,
                max_abs_score: fit.max_abs_score,
                loglik_trace: fit.iterations.iter().map(|r| r.loglik).collect(),
                halvings: fit.iterations.iter().map(|r| r.halvings).collect(),
            },
        })
    }

    /// Looks up a coefficient estimate by name, e.g. `"nu:intercept"`.
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientReport> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CmmError::Numerical(format!("cannot serialize report: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CmmError::DataFormat(format!("invalid report: {e}")))
    }
}

/// On-disk description of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub m: u32,
    pub p: Vec<f64>,
    pub nu: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Baseline category index; the last category when absent.
    #[serde(default)]
    pub baseline: Option<usize>,
}

fn default_burn_in() -> usize {
    2000
}

impl StudyFile {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CmmError::DataFormat(format!("invalid study config: {e}")))
    }

    pub fn to_config(&self) -> Result<StudyConfig> {
        let mut params = CmmParams::new(self.m, self.p.clone(), self.nu)?;
        if let Some(b) = self.baseline {
            params = params.with_baseline(b)?;
        }
        let mut c = StudyConfig::new(params, self.n, self.replicates, self.seed)?;
        c.burn_in = self.burn_in;
        Ok(c)
    }
}

/// JSON schema describing [`FitReport`].
pub const FIT_REPORT_SCHEMA: &str = include_str!("../schema/fit_report.schema.json");
