//! Random variate generation: exact inverse-CDF draws over an enumerated
//! space and a two-category Gibbs sampler for large spaces.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{visit_log_terms, CmmParams};
use crate::error::{CmmError, Result};
use crate::logspace::LnFactorial;
use crate::space::{distinguished_subsets, CountVector};

/// Seedable random stream. Independent sub-streams come from [`RandomSource::split`].
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// A reproducible stream that depends only on the seed and `stream`.
    pub fn split(&self, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.wrapping_add(1));
        Self { seed: self.seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Inverse-CDF draw of an index from unnormalized log weights.
pub fn draw_discrete(log_weights: &[f64], rng: &mut RandomSource) -> Result<usize> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(CmmError::Numerical("no finite weight to draw from".into()));
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let u = rng.uniform() * total;
    let mut cum = 0.0;
    for (i, w) in log_weights.iter().enumerate() {
        cum += (w - max).exp();
        if u < cum {
            return Ok(i);
        }
    }
    // u landed in the rounding gap at the top; return the last positive weight
    Ok(log_weights.iter().rposition(|w| w.is_finite()).unwrap())
}

/// Log weights of the Conway-Maxwell-binomial on `0..=n`.
fn cmb_log_weights(n: u32, prob: f64, nu: f64, lf: &LnFactorial, out: &mut Vec<f64>) {
    out.clear();
    let (lp, lq) = (prob.ln(), (-prob).ln_1p());
    for y in 0..=n {
        let lb = lf.get(n) - lf.get(y) - lf.get(n - y);
        out.push(nu * lb + y as f64 * lp + (n - y) as f64 * lq);
    }
}

/// One draw from the Conway-Maxwell-binomial `CMB(n, prob, nu)`.
pub fn draw_cmb(n: u32, prob: f64, nu: f64, rng: &mut RandomSource) -> Result<u32> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(CmmError::InvalidArgument(format!("probability must lie in (0, 1), got {prob}")));
    }
    if !nu.is_finite() {
        return Err(CmmError::InvalidArgument(format!("nu must be finite, got {nu}")));
    }
    if n == 0 {
        return Ok(0);
    }
    let lf = LnFactorial::new(n);
    let mut w = Vec::with_capacity(n as usize + 1);
    cmb_log_weights(n, prob, nu, &lf, &mut w);
    Ok(draw_discrete(&w, rng)? as u32)
}

/// Exact sampler backed by the full cumulative distribution of the space.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    points: Vec<Vec<u32>>,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(params: &CmmParams) -> Result<Self> {
        let mut points = Vec::new();
        let mut logs = Vec::new();
        let log_p: Vec<f64> = params.p().iter().map(|p| p.ln()).collect();
        visit_log_terms(&log_p, params.nu(), params.m(), |y, t| {
            points.push(y.to_vec());
            logs.push(t);
        })?;
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut cdf = Vec::with_capacity(logs.len());
        let mut cum = 0.0;
        for t in logs {
            cum += (t - max).exp();
            cdf.push(cum);
        }
        for c in &mut cdf {
            *c /= cum;
        }
        Ok(Self { points, cdf })
    }

    pub fn draw(&self, rng: &mut RandomSource) -> CountVector {
        let u = rng.uniform();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.points.len() - 1);
        CountVector::new(self.points[i].clone()).expect("k >= 2")
    }

    pub fn draw_n(&self, n: usize, rng: &mut RandomSource) -> Vec<CountVector> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Burn-in and thinning for [`gibbs_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsConfig {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { burn_in: 1000, thin: 1 }
    }
}

/// Retained states of a Gibbs run.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub draws: Vec<CountVector>,
    pub burn_in: usize,
    pub thin: usize,
}

/// Largest number of cached conditional probabilities before the sampler
/// falls back to computing each conditional on the fly.
const TABLE_LIMIT: usize = 5_000_000;

/// Systematic-scan Gibbs sampler.
///
/// Each sweep pairs every non-baseline category `j` with the baseline and
/// redraws `y_j` from `CMB(y_j + y_base, p_j / (p_j + p_base), nu)`, leaving
/// the baseline with the remainder. Chains start at a center point.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    params: CmmParams,
    others: Vec<usize>,
    start: Vec<u32>,
    lf: LnFactorial,
    /// `tables[i][n]` is the cdf of the conditional for `others[i]` given
    /// `n` trials shared with the baseline.
    tables: Option<Vec<Vec<Vec<f64>>>>,
}

impl GibbsSampler {
    pub fn new(params: &CmmParams) -> Result<Self> {
        let m = params.m();
        let others: Vec<usize> = params.non_baseline().collect();
        let start = distinguished_subsets(m, params.k())?.centers.swap_remove(0).into_inner();
        let lf = LnFactorial::new(m);
        let cached = others.len() * (m as usize + 1) * (m as usize + 2) / 2;
        let tables = (cached <= TABLE_LIMIT).then(|| {
            let p = params.p();
            let base = params.baseline();
            let mut w = Vec::new();
            others
                .iter()
                .map(|&j| {
                    (0..=m)
                        .map(|n| {
                            cmb_log_weights(n, p[j] / (p[j] + p[base]), params.nu(), &lf, &mut w);
                            cdf_of(&w)
                        })
                        .collect()
                })
                .collect()
        });
        Ok(Self { params: params.clone(), others, start, lf, tables })
    }

    fn sweep(&self, state: &mut [u32], w: &mut Vec<f64>, rng: &mut RandomSource) -> Result<()> {
        let base = self.params.baseline();
        let p = self.params.p();
        for (i, &j) in self.others.iter().enumerate() {
            let n = state[j] + state[base];
            if n == 0 {
                continue;
            }
            let yj = match &self.tables {
                Some(t) => {
                    let cdf = &t[i][n as usize];
                    let u = rng.uniform();
                    cdf.partition_point(|&c| c <= u).min(n as usize) as u32
                }
                None => {
                    cmb_log_weights(n, p[j] / (p[j] + p[base]), self.params.nu(), &self.lf, w);
                    draw_discrete(w, rng)? as u32
                }
            };
            state[j] = yj;
            state[base] = n - yj;
        }
        Ok(())
    }

    /// Runs one chain and keeps `n_draws` states after burn-in and thinning.
    pub fn chain(&self, n_draws: usize, config: GibbsConfig, rng: &mut RandomSource) -> Result<GibbsChain> {
        if config.thin == 0 {
            return Err(CmmError::InvalidArgument("thin must be at least 1".into()));
        }
        let mut state = self.start.clone();
        let mut w = Vec::new();
        for _ in 0..config.burn_in {
            self.sweep(&mut state, &mut w, rng)?;
        }
        let mut draws = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            for _ in 0..config.thin {
                self.sweep(&mut state, &mut w, rng)?;
            }
            draws.push(CountVector::new(state.clone())?);
        }
        Ok(GibbsChain { draws, burn_in: config.burn_in, thin: config.thin })
    }

    /// `n` draws, each the final state of its own fresh chain.
    pub fn independent_draws(&self, n: usize, burn_in: usize, rng: &mut RandomSource) -> Result<Vec<CountVector>> {
        let mut w = Vec::new();
        (0..n)
            .map(|_| {
                let mut state = self.start.clone();
                for _ in 0..burn_in.max(1) {
                    self.sweep(&mut state, &mut w, rng)?;
                }
                CountVector::new(state)
            })
            .collect()
    }
}

fn cdf_of(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cum = 0.0;
    let mut out: Vec<f64> = log_w
        .iter()
        .map(|w| {
            cum += (w - max).exp();
            cum
        })
        .collect();
    for c in &mut out {
        *c /= cum;
    }
    out
}

/// Convenience wrapper: builds a [`GibbsSampler`] and runs one chain.
pub fn gibbs_chain(
    params: &CmmParams,
    n_draws: usize,
    config: GibbsConfig,
    rng: &mut RandomSource,
) -> Result<GibbsChain> {
    GibbsSampler::new(params)?.chain(n_draws, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let root = RandomSource::new(7);
        let a: Vec<u64> = (0..4).map({
            let mut s = root.split(3);
            move |_| s.next_u64()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut s = root.split(3);
            move |_| s.next_u64()
        }).collect();
        let mut other = root.split(4);
        assert_eq!(a, b);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn discrete_respects_zero_weight() {
        let mut rng = RandomSource::new(1);
        for _ in 0..200 {
            let i = draw_discrete(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], &mut rng).unwrap();
            assert_eq!(i, 1);
        }
        assert!(draw_discrete(&[f64::NEG_INFINITY], &mut rng).is_err());
    }

    #[test]
    fn cmb_edge_cases() {
        let mut rng = RandomSource::new(2);
        assert_eq!(draw_cmb(0, 0.3, 1.0, &mut rng).unwrap(), 0);
        assert!(draw_cmb(3, 0.0, 1.0, &mut rng).is_err());
        assert!(draw_cmb(3, 0.5, f64::INFINITY, &mut rng).is_err());
        for _ in 0..50 {
            assert!(draw_cmb(5, 0.4, -2.0, &mut rng).unwrap() <= 5);
        }
    }

    #[test]
    fn chain_preserves_total() {
        let params = CmmParams::new(9, vec![0.2, 0.3, 0.5], 0.7).unwrap();
        let mut rng = RandomSource::new(11);
        let chain = gibbs_chain(&params, 100, GibbsConfig { burn_in: 10, thin: 2 }, &mut rng).unwrap();
        assert_eq!(chain.draws.len(), 100);
        assert!(chain.draws.iter().all(|d| d.total() == 9));
    }
}
