//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use cmm::diagnostics::{run_consistency_study, StudyConfig, LARGE_Q};
use cmm::dist::{log_norm_const_t, moments, Cmm, CmmParams};
use cmm::inference::{fit_cmm, fit_multinomial, Dataset, FitOptions, Observation};
use cmm::io::{load_csv, CsvOptions, FitReport};
use cmm::sampler::{ExactSampler, GibbsConfig, GibbsSampler, RandomSource};
use cmm::space::space_size;
use cmm::CountVector;

mod common;
use common::{compositions, ln_fact, oracle_pmf};

struct Outcome {
    ok: bool,
    skipped: bool,
    /// Sub-checks that cannot hold for any correct implementation.
    exceptions: usize,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { ok: true, skipped: false, exceptions: 0, detail: String::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.ok = false;
            self.notes.push(format!("failed: {}", what.into()));
        }
    }

    fn within(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        let ok = (value - target).abs() <= tol;
        self.check(ok, format!("{label} = {value:.6}, target {target} +/- {tol}"));
        if ok {
            self.detail.push_str(&format!("{label} {value:.4}; "));
        }
    }
}

fn random_p(k: usize, rng: &mut RandomSource) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Limiting pmf as nu goes to -inf (`vertices = true`) or +inf.
fn limit_pmf(m: u32, p: &[f64], y: &[u32], vertices: bool) -> f64 {
    let k = p.len();
    if vertices {
        let total: f64 = p.iter().map(|q| q.powi(m as i32)).sum();
        match y.iter().position(|&c| c == m) {
            Some(j) => p[j].powi(m as i32) / total,
            None => 0.0,
        }
    } else {
        let q = m / k as u32;
        let is_center = |z: &[u32]| z.iter().all(|&c| c == q || c == q + 1);
        let weight = |z: &[u32]| z.iter().zip(p).map(|(&c, q)| q.powi(c as i32)).product::<f64>();
        let total: f64 = compositions(m, k).iter().filter(|z| is_center(z)).map(|z| weight(z)).sum();
        if is_center(y) {
            weight(y) / total
        } else {
            0.0
        }
    }
}

fn criterion_1() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = RandomSource::new(101);
    let (mut worst_norm, mut worst_mult, mut worst_unif, mut worst_limit) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut defects = Vec::new();
    for _ in 0..50 {
        let m = rng.random_range(1..=6u32);
        let k = rng.random_range(2..=4usize);
        let p = random_p(k, &mut rng);
        let nu = rng.random_range(-4.0..6.0);

        let table = Cmm::new(CmmParams::new(m, p.clone(), nu).unwrap()).unwrap().pmf_table().unwrap();
        worst_norm = worst_norm.max((table.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs());

        let table = Cmm::new(CmmParams::new(m, p.clone(), 1.0).unwrap()).unwrap().pmf_table().unwrap();
        for (y, v) in &table {
            let c = y.counts();
            let mult = (ln_fact(m) - c.iter().map(|&c| ln_fact(c)).sum::<f64>()
                + c.iter().zip(&p).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>())
            .exp();
            worst_mult = worst_mult.max((v - mult).abs());
        }

        let uniform = vec![1.0 / k as f64; k];
        let size = space_size(m, k).unwrap() as f64;
        let table = Cmm::new(CmmParams::new(m, uniform, 0.0).unwrap()).unwrap().pmf_table().unwrap();
        worst_unif = worst_unif.max(table.iter().map(|(_, v)| (v - 1.0 / size).abs()).fold(0.0, f64::max));

        for nu in [-50.0, 50.0] {
            let table = Cmm::new(CmmParams::new(m, p.clone(), nu).unwrap()).unwrap().pmf_table().unwrap();
            let oracle = oracle_pmf(m, &p, nu);
            let mut lib_gap = 0.0f64;
            let mut oracle_gap = 0.0f64;
            let mut lib_vs_oracle = 0.0f64;
            for ((y, v), (z, o)) in table.iter().zip(&oracle) {
                assert_eq!(y.counts(), z.as_slice());
                let lim = limit_pmf(m, &p, z, nu < 0.0);
                lib_gap = lib_gap.max((v - lim).abs());
                oracle_gap = oracle_gap.max((o - lim).abs());
                lib_vs_oracle = lib_vs_oracle.max((v - o).abs());
            }
            out.check(lib_vs_oracle <= 1e-12, format!("nu={nu} m={m} k={k}: pmf differs from brute force by {lib_vs_oracle:e}"));
            if lib_gap <= 1e-6 {
                worst_limit = worst_limit.max(lib_gap);
            } else if oracle_gap > 1e-6 && lib_vs_oracle <= 1e-12 {
                // the exact distribution itself is further than 1e-6 from its limit
                defects.push(format!("m={m} k={k} nu={nu}: exact pmf is {oracle_gap:.3e} from the limit"));
            } else {
                out.check(false, format!("nu={nu} m={m} k={k}: limit gap {lib_gap:e}"));
            }
        }
    }
    out.check(worst_norm <= 1e-10, format!("normalization error {worst_norm:e}"));
    out.check(worst_mult <= 1e-12, format!("multinomial error {worst_mult:e}"));
    out.check(worst_unif <= 1e-12, format!("uniform error {worst_unif:e}"));
    out.detail = format!(
        "50 sets: |sum-1| {worst_norm:.1e}, nu=1 vs multinomial {worst_mult:.1e}, uniform nu=0 {worst_unif:.1e}, nu=+-50 limit gap {worst_limit:.1e}"
    );
    out.exceptions = defects.len();
    for d in defects {
        out.notes.push(format!("unattainable at 1e-6 (library matches brute force to 1e-12): {d}"));
    }
    out
}

fn criterion_2() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = RandomSource::new(202);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(1..=6u32);
        let k = rng.random_range(2..=4usize);
        let p = random_p(k, &mut rng);
        let nu = rng.random_range(-2.0..3.0);
        let params = CmmParams::new(m, p, nu).unwrap();
        let mo = moments(&params).unwrap();
        let theta = params.theta();
        let d = theta.len();
        // E(Y_j) = theta_j d lnT / d theta_j
        let mean_at = |th: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|j| {
                    let h = 1e-6 * th[j];
                    let (mut up, mut dn) = (th.to_vec(), th.to_vec());
                    up[j] += h;
                    dn[j] -= h;
                    th[j] * (log_norm_const_t(&up, nu, m).unwrap() - log_norm_const_t(&dn, nu, m).unwrap()) / (2.0 * h)
                })
                .collect()
        };
        let mean = mean_at(&theta);
        for j in 0..d {
            let e = (mean[j] - mo.mean[j]).abs() / mo.mean[j].abs().max(1.0);
            worst = worst.max(e);
        }
        // Cov(Y_j, Y_l) = theta_j d E(Y_l) / d theta_j, with a coarser step on the nested difference
        for j in 0..d {
            let h = 1e-4 * theta[j];
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[j] += h;
            dn[j] -= h;
            let (mu_up, mu_dn) = (mean_at(&up), mean_at(&dn));
            for l in 0..d {
                let cov = theta[j] * (mu_up[l] - mu_dn[l]) / (2.0 * h);
                let e = (cov - mo.covariance[(j, l)]).abs() / mo.covariance[(j, l)].abs().max(1.0);
                worst = worst.max(e);
            }
        }
    }
    out.check(worst <= 1e-4, format!("largest discrepancy {worst:e}"));
    out.detail = format!("20 instances: largest mean/covariance discrepancy {worst:.2e} (tol 1e-4)");
    out
}

fn criterion_3() -> Outcome {
    let mut out = Outcome::new();
    let mut parts = Vec::new();
    for (i, nu) in [0.5, 2.0].into_iter().enumerate() {
        let params = CmmParams::new(4, vec![0.5, 0.3, 0.2], nu).unwrap();
        let exact = Cmm::new(params.clone()).unwrap().pmf_table().unwrap();
        let mut rng = RandomSource::new(300 + i as u64);
        let chain = GibbsSampler::new(&params)
            .unwrap()
            .chain(200_000, GibbsConfig { burn_in: 1000, thin: 1 }, &mut rng)
            .unwrap();
        let n = chain.draws.len() as f64;
        let tv: f64 = exact
            .iter()
            .map(|(y, pr)| {
                let hits = chain.draws.iter().filter(|d| d.counts() == y.counts()).count() as f64;
                (hits / n - pr).abs()
            })
            .sum::<f64>()
            / 2.0;
        out.check(tv < 0.01, format!("nu={nu}: TV {tv}"));
        parts.push(format!("nu={nu} TV {tv:.4}"));
    }
    out.detail = format!("{} (tol 0.01)", parts.join(", "));
    out
}

/// Log-likelihood of i.i.d. clusters with the last category as baseline.
fn oracle_loglik(ys: &[Vec<u32>], phi: &[f64], nu: f64) -> f64 {
    let mut w: Vec<f64> = phi.iter().map(|v| v.exp()).collect();
    w.push(1.0);
    let s: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|v| v / s).collect();
    ys.iter()
        .map(|y| {
            let m: u32 = y.iter().sum();
            let table = oracle_pmf(m, &p, nu);
            table.iter().find(|(z, _)| z == y).unwrap().1.ln()
        })
        .sum()
}

/// Nelder-Mead minimization with restarts.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64]) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut best = start.to_vec();
    let mut best_f = f(&best);
    for _restart in 0..20 {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..n {
            let mut v = best.clone();
            v[i] += 0.5;
            simplex.push(v);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
        for _ in 0..5000 {
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();
            if (vals[n] - vals[0]).abs() < 1e-13 {
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (simplex[n][d] - centroid[d])).collect() };
            let r = along(-1.0);
            let fr = f(&r);
            if fr < vals[0] {
                let e = along(-2.0);
                let fe = f(&e);
                if fe < fr {
                    simplex[n] = e;
                    vals[n] = fe;
                } else {
                    simplex[n] = r;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = r;
                vals[n] = fr;
            } else {
                let c = if fr < vals[n] { along(-0.5) } else { along(0.5) };
                let fc = f(&c);
                if fc < vals[n].min(fr) {
                    simplex[n] = c;
                    vals[n] = fc;
                } else {
                    for i in 1..=n {
                        simplex[i] = (0..n).map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d])).collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let i = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        if vals[i] < best_f - 1e-12 {
            best = simplex[i].clone();
            best_f = vals[i];
        } else {
            best = simplex[i].clone();
            best_f = best_f.min(vals[i]);
            break;
        }
    }
    (best, best_f)
}

fn criterion_4() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = RandomSource::new(404);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.random_range(15..=30usize);
        let p = random_p(3, &mut rng);
        let nu = rng.random_range(0.3..2.0);
        let ys: Vec<Vec<u32>> = (0..n)
            .map(|_| {
                let m = rng.random_range(2..=4u32);
                let s = ExactSampler::new(&CmmParams::new(m, p.clone(), nu).unwrap()).unwrap();
                s.draw(&mut rng).into_inner()
            })
            .collect();
        let data = Dataset::iid(ys.iter().map(|y| CountVector::new(y.clone()).unwrap()).collect()).unwrap();
        let fit = match fit_cmm(&data, &FitOptions::default()) {
            Ok(f) => f,
            Err(e) => {
                out.check(false, format!("fit failed: {e}"));
                continue;
            }
        };
        out.check(fit.converged && !fit.boundary, format!("fit did not converge on {ys:?}"));
        let (_, neg) = nelder_mead(|v| -oracle_loglik(&ys, &v[..2], v[2]), &[0.0, 0.0, 1.0]);
        let diff = (fit.loglik + neg).abs();
        worst = worst.max(diff);
        out.check(diff <= 1e-4, format!("loglik {} vs direct search {}", fit.loglik, -neg));
    }
    let tiny = Dataset::iid(
        [[2, 0], [1, 1], [1, 1], [0, 2]].iter().map(|y| CountVector::new(y.to_vec()).unwrap()).collect(),
    )
    .unwrap();
    let fit = fit_cmm(&tiny, &FitOptions::default()).unwrap();
    let params = fit.fitted_params(&tiny.observations()[0]).unwrap();
    let (p_hat, nu_hat) = (params.p()[0], params.nu());
    out.check((p_hat - 0.5).abs() <= 1e-6 && (nu_hat - 1.0).abs() <= 1e-6, format!("derived example gave ({p_hat}, {nu_hat})"));
    out.detail = format!(
        "10 datasets: largest |loglik - direct search| {worst:.2e} (tol 1e-4); two-category example ({p_hat:.8}, {nu_hat:.8})"
    );
    out
}

fn criterion_5() -> Outcome {
    let mut out = Outcome::new();
    let Ok(path) = std::env::var("CMM_POLLEN_CSV") else {
        out.skipped = true;
        out.detail = "set CMM_POLLEN_CSV to a CSV with y_pine,y_fir,y_oak,y_alder".into();
        return out;
    };
    let opts = CsvOptions { w_columns: Some(vec![]), intercept_x: true, intercept_w: true };
    let data = match load_csv(&path, &opts) {
        Ok(d) => d,
        Err(e) => {
            out.check(false, format!("cannot read {path}: {e}"));
            return out;
        }
    };
    let fit_opts = FitOptions { baseline: data.category_index("alder"), ..FitOptions::default() };
    let fit = fit_cmm(&data, &fit_opts).unwrap();
    let mult = fit_multinomial(&data, &fit_opts).unwrap();
    let report = FitReport::new(&fit, &data).unwrap();
    out.within("loglik", fit.loglik, -502.339, 0.01);
    let nu = report.coefficient("nu:intercept").unwrap();
    out.within("nu", nu.estimate, 0.253, 0.002);
    out.within("nu SE", nu.std_error.unwrap_or(f64::NAN), 0.047, 0.003);
    for (cat, target) in [("pine", -1.403), ("fir", -0.615), ("oak", -0.989)] {
        let c = report.coefficient(&format!("{cat}:intercept")).unwrap();
        out.within(&format!("logit {cat}"), c.estimate, target, 0.005);
    }
    out.within("AIC", fit.aic, 1012.678, 0.05);
    out.within("multinomial loglik", mult.loglik, -567.851, 0.01);
    for (j, target) in [86.274, 1.411, 9.068, 3.247].into_iter().enumerate() {
        out.within(&format!("E[y_{j}]"), fit.expected_counts[0][j], target, 0.01);
    }
    out.within("RSS", report.rss, 6094.4, 0.5);
    out
}

fn criterion_6() -> Outcome {
    let mut out = Outcome::new();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/alligator.csv");
    let data_a = load_csv(path, &CsvOptions { w_columns: Some(vec![]), ..CsvOptions::default() }).unwrap();
    let data_b = load_csv(path, &CsvOptions { w_columns: Some(vec!["size".into()]), ..CsvOptions::default() }).unwrap();
    let opts = FitOptions { baseline: data_a.category_index("fish"), ..FitOptions::default() };
    let a = fit_cmm(&data_a, &opts).unwrap();
    let b = fit_cmm(&data_b, &opts).unwrap();
    let mult = fit_multinomial(&data_a, &opts).unwrap();
    let ra = FitReport::new(&a, &data_a).unwrap();
    out.within("A loglik", a.loglik, -73.742, 0.01);
    let g = ra.coefficient("nu:intercept").unwrap();
    out.within("A gamma", g.estimate, 1.377, 0.005);
    out.within("A gamma SE", g.std_error.unwrap_or(f64::NAN), 0.346, 0.01);
    out.within("A AIC", a.aic, 189.485, 0.05);
    out.within("A RSS", ra.rss, 92.10, 0.2);
    out.within("B loglik", b.loglik, -72.114, 0.01);
    out.within("B gamma0", b.coefficients.gamma[0], 1.905, 0.01);
    out.within("B gamma1", b.coefficients.gamma[1], -0.926, 0.01);
    out.within("B AIC", b.aic, 188.227, 0.05);
    out.within("multinomial loglik", mult.loglik, -74.430, 0.01);
    out
}

fn criterion_7() -> Outcome {
    let mut out = Outcome::new();
    let uniform = vec![1.0 / 3.0; 3];
    let cfg = StudyConfig::new(CmmParams::new(5, uniform.clone(), 0.0).unwrap(), 200, 500, 7001).unwrap();
    let s = run_consistency_study(&cfg).unwrap().summary;
    out.check(s.ks_chi_square < 0.08, format!("KS {}", s.ks_chi_square));
    out.check(s.n_large_q <= 2, format!("{} replicates with Q >= {LARGE_Q}", s.n_large_q));
    let cfg = StudyConfig::new(CmmParams::new(2, uniform, -3.0).unwrap(), 10, 500, 7002).unwrap();
    let t = run_consistency_study(&cfg).unwrap().summary;
    let frac = t.n_large_q as f64 / t.replicates as f64;
    out.check(frac > 0.2, format!("Q >= {LARGE_Q} fraction {frac}"));
    out.detail = format!(
        "nu=0: KS {:.4} (< 0.08), Q>=30 count {} (0-2); nu=-3: Q>=30 fraction {frac:.3} (> 0.2), {} failed fits",
        s.ks_chi_square, s.n_large_q, t.n_failed
    );
    out
}

fn criterion_8() -> Outcome {
    let mut out = Outcome::new();
    let mut parts = Vec::new();
    for nu in [0.25, 1.0, 4.0] {
        let params = CmmParams::new(20, vec![1.0 / 3.0; 3], nu).unwrap();
        let sampler = GibbsSampler::new(&params).unwrap();
        let mut hats = Vec::new();
        for seed in 1..=3u64 {
            let mut rng = RandomSource::new(8000 + seed);
            let ys = sampler.independent_draws(100, 2000, &mut rng).unwrap();
            let data = Dataset::new(ys.into_iter().map(Observation::intercept_only).collect()).unwrap();
            let fit = fit_cmm(&data, &FitOptions::default()).unwrap();
            let nu_hat = fit.coefficients.gamma[0];
            let ok = if nu < 1.0 {
                nu_hat < 1.0
            } else if nu > 1.0 {
                nu_hat > 1.0
            } else {
                (0.5..1.5).contains(&nu_hat)
            };
            out.check(ok && fit.converged, format!("nu={nu} seed {seed}: nu_hat {nu_hat}"));
            hats.push(format!("{nu_hat:.3}"));
        }
        parts.push(format!("nu={nu}: [{}]", hats.join(", ")));
    }
    out.detail = parts.join("; ");
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("1 normalization and special cases", criterion_1, Duration::from_secs(10)),
        ("2 moment identities", criterion_2, Duration::from_secs(30)),
        ("3 Gibbs total variation", criterion_3, Duration::from_secs(60)),
        ("4 MLE vs direct search", criterion_4, Duration::from_secs(120)),
        ("5 pollen reproduction", criterion_5, Duration::from_secs(120)),
        ("6 alligator reproduction", criterion_6, Duration::from_secs(300)),
        ("7 consistency study", criterion_7, Duration::from_secs(900)),
        ("8 dispersion sign regions", criterion_8, Duration::from_secs(60)),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        outcome.check(elapsed <= budget, format!("took {elapsed:.1?}, budget {budget:?}"));
        let tag = match (outcome.ok, outcome.skipped, outcome.exceptions) {
            (false, _, _) => "FAIL".to_string(),
            (true, true, _) => "SKIP".to_string(),
            (true, false, 0) => "PASS".to_string(),
            (true, false, n) => format!("PASS with {n} exception(s)"),
        };
        println!("criterion {name}: {tag} [{elapsed:.1?}] {}", outcome.detail.trim_end_matches("; "));
        for n in &outcome.notes {
            println!("    {n}");
        }
        if !outcome.ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
