use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cmm::diagnostics::run_consistency_study;
use cmm::dist::{moments, trial_correlation, Cmm, CmmParams};
use cmm::error::{CmmError, ErrorKind};
use cmm::inference::{fit_cmm, fit_multinomial, FitOptions, SeConvention};
use cmm::io::{load_csv, CsvOptions, FitReport, StudyFile};
use cmm::sampler::{ExactSampler, GibbsConfig, GibbsSampler, RandomSource};
use cmm::space::CountVector;

#[derive(Parser)]
#[command(name = "cmm", version, about = "Conway-Maxwell-multinomial densities, sampling and regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-pmf of one outcome, or the whole pmf table.
    Density {
        #[arg(long)]
        m: u32,
        /// Number of categories; required when --p is omitted (uniform p).
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated probabilities.
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        /// Comma-separated counts; prints the full table when omitted.
        #[arg(long, value_delimiter = ',')]
        y: Option<Vec<u32>>,
        #[arg(long)]
        json: bool,
    },
    /// Mean and covariance of the counts.
    Moments {
        #[arg(long)]
        m: u32,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        /// Also print correlations between two trials of a cluster.
        #[arg(long)]
        trial_corr: bool,
        #[arg(long)]
        json: bool,
    },
    /// Random draws as CSV.
    Sample {
        #[arg(long)]
        m: u32,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[arg(long, allow_hyphen_values = true)]
        nu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        thin: usize,
        #[arg(long, value_enum, default_value_t = Method::Gibbs)]
        method: Method,
    },
    /// Maximum-likelihood fit of a CSV dataset; prints a JSON report.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Model::Cmm)]
        model: Model,
        /// Baseline category name (the `y_` suffix); defaults to the last.
        #[arg(long)]
        baseline: Option<String>,
        /// Comma-separated `w_` columns for the dispersion link; intercept only by default.
        #[arg(long, value_delimiter = ',')]
        nu_formula: Option<Vec<String>>,
        #[arg(long)]
        no_intercept_x: bool,
        #[arg(long)]
        no_intercept_w: bool,
        #[arg(long, value_enum, default_value_t = SeArg::InvertThenExtract)]
        se: SeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated fits of simulated data; prints per-replicate Q and a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Gibbs,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cmm,
    Multinomial,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeArg {
    InvertThenExtract,
    DropThenInvert,
}

/// `%g`-style formatting with six significant digits.
fn g6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..6).contains(&e) {
        let s = format!("{:.*}", (5 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(g6).collect::<Vec<_>>().join(",")
}

fn params_from(m: u32, k: Option<usize>, p: Option<Vec<f64>>, nu: f64) -> Result<CmmParams, CmmError> {
    let p = match (p, k) {
        (Some(p), Some(k)) if p.len() != k => {
            return Err(CmmError::DimensionMismatch(format!("--p has {} entries but --k is {k}", p.len())))
        }
        (Some(p), _) => p,
        (None, Some(k)) if k >= 2 => vec![1.0 / k as f64; k],
        (None, Some(k)) => return Err(CmmError::InvalidArgument(format!("k must be at least 2, got {k}"))),
        (None, None) => return Err(CmmError::InvalidArgument("give --p or --k".into())),
    };
    CmmParams::new(m, p, nu)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CmmError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CmmError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CmmError> {
    match cli.command {
        Command::Density { m, k, p, nu, y, json } => {
            let params = params_from(m, k, p, nu)?;
            let dist = Cmm::new(params)?;
            let mut text = String::new();
            match y {
                Some(y) => {
                    let y = CountVector::new(y)?;
                    let lp = dist.log_pmf(&y)?;
                    text = if json {
                        format!("{}\n", json!({ "y": y, "log_pmf": lp, "pmf": lp.exp() }))
                    } else {
                        format!("y={y} log_pmf={} pmf={}\n", g6(lp), g6(lp.exp()))
                    };
                }
                None => {
                    let table = dist.pmf_table()?;
                    if json {
                        let rows: Vec<_> = table.iter().map(|(y, p)| json!({ "y": y, "pmf": p })).collect();
                        text = format!("{}\n", serde_json::Value::Array(rows));
                    } else {
                        text.push_str("y,pmf\n");
                        for (y, p) in table {
                            text.push_str(&format!("\"{y}\",{}\n", g6(p)));
                        }
                    }
                }
            }
            emit(None, &text)
        }
        Command::Moments { m, p, nu, trial_corr, json } => {
            let params = CmmParams::new(m, p, nu)?;
            let mo = moments(&params)?;
            let tc = if trial_corr { Some(trial_correlation(&params)?) } else { None };
            let rows = |mat: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
                (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
            };
            let text = if json {
                let mut v = json!({ "mean": mo.mean.as_slice(), "covariance": rows(&mo.covariance) });
                if let Some(tc) = &tc {
                    v["trial_correlation"] = json!(rows(&tc.corr));
                }
                format!("{v}\n")
            } else {
                let mut s = format!("mean: {}\ncovariance:\n", join(mo.mean.iter().copied()));
                for r in rows(&mo.covariance) {
                    s.push_str(&format!("  {}\n", join(r)));
                }
                if let Some(tc) = &tc {
                    s.push_str("trial correlation:\n");
                    for r in rows(&tc.corr) {
                        s.push_str(&format!("  {}\n", join(r)));
                    }
                }
                s
            };
            emit(None, &text)
        }
        Command::Sample { m, p, nu, n, seed, burn_in, thin, method } => {
            let params = CmmParams::new(m, p, nu)?;
            let mut rng = RandomSource::new(seed);
            let draws = match method {
                Method::Gibbs => GibbsSampler::new(&params)?.chain(n, GibbsConfig { burn_in, thin }, &mut rng)?.draws,
                Method::Exact => ExactSampler::new(&params)?.draw_n(n, &mut rng),
            };
            let mut s = (1..=params.k()).map(|j| format!("y_{j}")).collect::<Vec<_>>().join(",");
            s.push('\n');
            for d in draws {
                s.push_str(&d.counts().iter().map(u32::to_string).collect::<Vec<_>>().join(","));
                s.push('\n');
            }
            emit(None, &s)
        }
        Command::Fit { data, model, baseline, nu_formula, no_intercept_x, no_intercept_w, se, out } => {
            let csv_opts = CsvOptions {
                intercept_x: !no_intercept_x,
                intercept_w: !no_intercept_w,
                w_columns: Some(nu_formula.unwrap_or_default().into_iter().filter(|c| !c.is_empty()).collect()),
            };
            let ds = load_csv(&data, &csv_opts)?;
            let baseline = match baseline {
                Some(name) => Some(ds.category_index(&name).ok_or_else(|| {
                    CmmError::InvalidArgument(format!("unknown baseline {name:?}; categories are {:?}", ds.category_names()))
                })?),
                None => None,
            };
            let se_convention = match se {
                SeArg::InvertThenExtract => SeConvention::InvertThenExtract,
                SeArg::DropThenInvert => SeConvention::DropThenInvert,
            };
            let opts = FitOptions { baseline, se_convention, ..FitOptions::default() };
            let fit = match model {
                Model::Cmm => fit_cmm(&ds, &opts)?,
                Model::Multinomial => fit_multinomial(&ds, &opts)?,
            };
            let report = FitReport::new(&fit, &ds)?;
            emit(out.as_ref(), &format!("{}\n", report.to_json()?))
        }
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CmmError::Io(format!("{}: {e}", config.display())))?;
            let study = StudyFile::from_json(&text)?.to_config()?;
            let result = run_consistency_study(&study)?;
            let q: Vec<serde_json::Value> = result
                .replicates
                .iter()
                .map(|r| if r.q.is_finite() { json!(r.q) } else { json!("inf") })
                .collect();
            let v = json!({ "q": q, "summary": result.summary });
            let s = serde_json::to_string_pretty(&v).map_err(|e| CmmError::Numerical(e.to_string()))?;
            emit(out.as_ref(), &format!("{s}\n"))
        }
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return fail("usage", &first, 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.kind() {
            ErrorKind::Usage => fail("usage", &e.to_string(), 2),
            ErrorKind::Data => fail("data", &e.to_string(), 3),
            ErrorKind::Numerical => fail("numerical", &e.to_string(), 4),
        },
    }
}
