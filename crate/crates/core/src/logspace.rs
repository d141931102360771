//! Log-space accumulators used by every pass over a sample space.
//!
//! Unnormalized CMM masses span thousands of orders of magnitude once
//! `|nu|` is large, so nothing here ever leaves log space until a ratio
//! of two accumulated quantities is taken.

use statrs::function::gamma::ln_gamma;

/// Streaming log-sum-exp with a running maximum.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }

    #[inline]
    pub fn push(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term <= self.max {
            self.scaled += (log_term - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        }
    }

    /// Log of the accumulated sum; `-inf` when nothing finite was pushed.
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Log of `sum(exp(xs))` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.push(x);
    }
    acc.value()
}

/// Weighted mean and covariance of a vector statistic where the weights
/// arrive as logarithms.
///
/// Uses the incremental (West) update so the normalizing total never has
/// to be materialized in linear space, and the covariance is accumulated
/// about the running mean rather than as raw second moments.
#[derive(Debug, Clone)]
pub struct WeightedMoments {
    log_total: f64,
    mean: Vec<f64>,
    // Covariance normalized by the running total.
    cov: Vec<f64>,
    delta: Vec<f64>,
}

impl WeightedMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            log_total: f64::NEG_INFINITY,
            mean: vec![0.0; dim],
            cov: vec![0.0; dim * dim],
            delta: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn push(&mut self, log_weight: f64, stat: &[f64]) {
        debug_assert_eq!(stat.len(), self.mean.len());
        if log_weight == f64::NEG_INFINITY {
            return;
        }
        let d = self.mean.len();
        if self.log_total == f64::NEG_INFINITY {
            self.log_total = log_weight;
            self.mean.copy_from_slice(stat);
            return;
        }
        let new_total = if log_weight > self.log_total {
            log_weight + (self.log_total - log_weight).exp().ln_1p()
        } else {
            self.log_total + (log_weight - self.log_total).exp().ln_1p()
        };
        // share of the new point and of the previous total in the new total
        let frac = (log_weight - new_total).exp();
        let keep = (self.log_total - new_total).exp();
        for i in 0..d {
            self.delta[i] = stat[i] - self.mean[i];
        }
        for i in 0..d {
            self.mean[i] += frac * self.delta[i];
        }
        // cov_new = keep * cov + frac * keep * delta delta^T
        let fk = frac * keep;
        for i in 0..d {
            let di = self.delta[i];
            let row = &mut self.cov[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] = keep * row[j] + fk * di * self.delta[j];
            }
        }
        self.log_total = new_total;
    }

    /// Log of the total weight.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `dim x dim` covariance under the normalized weights.
    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    /// Row-major raw second moments `E[t t^T]`.
    pub fn second_moment(&self) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = self.cov.clone();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] += self.mean[i] * self.mean[j];
            }
        }
        out
    }
}

/// `ln(n!)`, exact to rounding for `n <= 170` and via log-gamma beyond.
pub fn ln_factorial(n: u32) -> f64 {
    if n <= 170 {
        (2..=n).fold(1.0f64, |acc, j| acc * j as f64).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Table of `ln(j!)` for `j = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(n: u32) -> Self {
        let mut table = Vec::with_capacity(n as usize + 1);
        let mut prod = 1.0f64;
        for j in 0..=n {
            if j <= 170 {
                prod *= j.max(1) as f64;
                table.push(prod.ln());
            } else {
                table.push(ln_gamma(j as f64 + 1.0));
            }
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, j: u32) -> f64 {
        self.table[j as usize]
    }

    /// `ln(m! / prod y_j!)` where `m = sum y`.
    #[inline]
    pub fn ln_multinomial(&self, y: &[u32]) -> f64 {
        let m: u32 = y.iter().sum();
        self.table[m as usize] - y.iter().map(|&v| self.table[v as usize]).sum::<f64>()
    }

    pub fn max_n(&self) -> u32 {
        (self.table.len() - 1) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_linear_sum() {
        let xs = [0.1_f64.ln(), 0.2_f64.ln(), 0.7_f64.ln()];
        assert!((log_sum_exp(&xs)).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_survives_huge_exponents() {
        let v = log_sum_exp(&[3500.0, 3500.0, -3500.0]);
        assert!((v - (3500.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn weighted_moments_match_direct_computation() {
        let pts = [[1.0, 2.0], [3.0, -1.0], [0.5, 0.5], [2.0, 2.0]];
        let w = [0.1, 0.4, 0.3, 0.2];
        let mut acc = WeightedMoments::new(2);
        for (p, &wi) in pts.iter().zip(&w) {
            acc.push(f64::ln(wi) + 1000.0, p);
        }
        let mean: Vec<f64> = (0..2).map(|i| pts.iter().zip(&w).map(|(p, wi)| p[i] * wi).sum()).collect();
        for i in 0..2 {
            assert!((acc.mean()[i] - mean[i]).abs() < 1e-12, "{} vs {}", acc.mean()[i], mean[i]);
            for j in 0..2 {
                let c: f64 = pts
                    .iter()
                    .zip(&w)
                    .map(|(p, wi)| wi * (p[i] - mean[i]) * (p[j] - mean[j]))
                    .sum();
                assert!((acc.covariance()[i * 2 + j] - c).abs() < 1e-12, "{} vs {}", acc.covariance()[i * 2 + j], c);
            }
        }
        assert!((acc.log_total() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn ln_factorial_table() {
        let t = LnFactorial::new(10);
        assert_eq!(t.get(0), 0.0);
        assert!((t.get(5) - 120f64.ln()).abs() < 1e-12);
        assert!((t.ln_multinomial(&[1, 1]) - 2f64.ln()).abs() < 1e-14);
    }
}
