//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

pub fn ln_fact(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Every composition of `m` into `k` parts, largest first coordinate first.
pub fn compositions(m: u32, k: usize) -> Vec<Vec<u32>> {
    if k == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in (0..=m).rev() {
        for mut rest in compositions(m - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Pmf over every composition, computed term by term.
pub fn oracle_pmf(m: u32, p: &[f64], nu: f64) -> Vec<(Vec<u32>, f64)> {
    let pts = compositions(m, p.len());
    let logs: Vec<f64> = pts
        .iter()
        .map(|y| {
            let lb = ln_fact(m) - y.iter().map(|&c| ln_fact(c)).sum::<f64>();
            nu * lb + y.iter().zip(p).map(|(&c, q)| c as f64 * q.ln()).sum::<f64>()
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    pts.into_iter().zip(logs).map(|(y, l)| (y, (l - max).exp() / total)).collect()
}

pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}
