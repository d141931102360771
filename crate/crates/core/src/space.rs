//! The multinomial sample space: all vectors of `k` non-negative counts
//! summing to `m`, enumerated in reverse-lexicographic order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CmmError, Result};
use crate::logspace::ln_factorial;

/// Default ceiling on the number of points a single pass may visit.
pub const DEFAULT_MAX_SPACE_SIZE: u64 = 50_000_000;

/// Environment variable that overrides [`DEFAULT_MAX_SPACE_SIZE`].
pub const MAX_SPACE_SIZE_ENV: &str = "CMM_MAX_SPACE_SIZE";

/// One cluster outcome: counts per category.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountVector(Vec<u32>);

impl CountVector {
    /// Builds a count vector; the trial count is the sum of the entries.
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(CmmError::InvalidArgument(format!(
                "a count vector needs at least 2 categories, got {}",
                counts.len()
            )));
        }
        Ok(Self(counts))
    }

    /// Builds a count vector and checks it against a declared trial count.
    pub fn with_total(counts: Vec<u32>, m: u32) -> Result<Self> {
        let cv = Self::new(counts)?;
        if cv.total() != m {
            return Err(CmmError::DimensionMismatch(format!(
                "counts {:?} sum to {} but m = {}",
                cv.0,
                cv.total(),
                m
            )));
        }
        Ok(cv)
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }
}

impl fmt::Display for CountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl AsRef<[u32]> for CountVector {
    fn as_ref(&self) -> &[u32] {
        &self.0
    }
}

/// Vertex and center points of the sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceSubsets {
    pub vertices: Vec<CountVector>,
    pub centers: Vec<CountVector>,
    /// `m = q k + r`
    pub q: u32,
    pub r: u32,
}

/// Number of points in the sample space, `binom(m + k - 1, m)`.
pub fn space_size(m: u32, k: usize) -> Result<u64> {
    if k < 2 {
        return Err(CmmError::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    // binom(m + k - 1, k - 1), multiplying in the smaller of the two ranges
    let n = m as u128 + k as u128 - 1;
    let r = std::cmp::min(m as u128, k as u128 - 1);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc
            .checked_mul(n - i)
            .ok_or(CmmError::SpaceOverflow { m, k })?
            / (i + 1);
    }
    u64::try_from(acc).map_err(|_| CmmError::SpaceOverflow { m, k })
}

/// The active sample-space limit, honoring [`MAX_SPACE_SIZE_ENV`].
pub fn max_space_size() -> u64 {
    std::env::var(MAX_SPACE_SIZE_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_MAX_SPACE_SIZE)
}

/// Size of the sample space, or an error when it exceeds the active limit.
pub fn checked_space_size(m: u32, k: usize) -> Result<u64> {
    let size = space_size(m, k)?;
    let limit = max_space_size();
    if size > limit {
        return Err(CmmError::SpaceTooLarge { m, k, size: size as u128, limit });
    }
    Ok(size)
}

/// `ln(m! / (y_1! ... y_k!))`.
pub fn log_multinomial_coeff(y: &CountVector) -> f64 {
    let m = y.total();
    ln_factorial(m) - y.counts().iter().map(|&v| ln_factorial(v)).sum::<f64>()
}

/// Streaming enumeration of the sample space.
///
/// Use [`Compositions::advance`] in hot loops to visit points without
/// allocating; the [`Iterator`] impl yields owned [`CountVector`]s.
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<u32>,
    started: bool,
    done: bool,
    len: u64,
}

impl Compositions {
    fn new(m: u32, k: usize, len: u64) -> Self {
        let mut current = vec![0; k];
        current[0] = m;
        Self { current, started: false, done: false, len }
    }

    /// Moves to the next point and returns it, or `None` once exhausted.
    pub fn advance(&mut self) -> Option<&[u32]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        let k = self.current.len();
        let last = self.current[k - 1];
        self.current[k - 1] = 0;
        match (0..k - 1).rev().find(|&i| self.current[i] > 0) {
            Some(i) => {
                self.current[i] -= 1;
                self.current[i + 1] = last + 1;
                Some(&self.current)
            }
            None => {
                self.done = true;
                None
            }
        }
    }

    /// Total number of points in the enumeration.
    pub fn space_len(&self) -> u64 {
        self.len
    }
}

impl Iterator for Compositions {
    type Item = CountVector;

    fn next(&mut self) -> Option<CountVector> {
        self.advance().map(|s| CountVector(s.to_vec()))
    }
}

/// Enumerates the sample space for `m` trials and `k` categories.
///
/// Order is reverse-lexicographic on the leading `k - 1` coordinates, so
/// `(m, 0, ..., 0)` comes first and `(0, ..., 0, m)` last.
pub fn enumerate_compositions(m: u32, k: usize) -> Result<Compositions> {
    let len = checked_space_size(m, k)?;
    Ok(Compositions::new(m, k, len))
}

/// Calls `f` on every point of the sample space.
pub fn for_each_composition(m: u32, k: usize, mut f: impl FnMut(&[u32])) -> Result<()> {
    let mut it = enumerate_compositions(m, k)?;
    while let Some(y) = it.advance() {
        f(y);
    }
    Ok(())
}

/// Vertex points `m e_j` and the center points closest to `(m/k, ..., m/k)`.
pub fn distinguished_subsets(m: u32, k: usize) -> Result<SpaceSubsets> {
    if k < 2 {
        return Err(CmmError::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if m < 1 {
        return Err(CmmError::InvalidArgument("m must be at least 1".into()));
    }
    let vertices = (0..k)
        .map(|j| {
            let mut v = vec![0; k];
            v[j] = m;
            CountVector(v)
        })
        .collect();
    let q = m / k as u32;
    let r = m % k as u32;
    // choose which r categories receive an extra trial, in reverse-lex order
    let mut centers = Vec::new();
    let mut pick: Vec<usize> = (0..r as usize).collect();
    loop {
        let mut c = vec![q; k];
        for &i in &pick {
            c[i] += 1;
        }
        centers.push(CountVector(c));
        // next combination in lexicographic order of index sets
        let rr = pick.len();
        let mut i = rr;
        loop {
            if i == 0 {
                return Ok(SpaceSubsets { vertices, centers, q, r });
            }
            i -= 1;
            if pick[i] < k - rr + i {
                break;
            }
        }
        pick[i] += 1;
        for j in i + 1..rr {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[u32]) -> CountVector {
        CountVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_trial_space() {
        let got: Vec<_> = enumerate_compositions(1, 3).unwrap().collect();
        assert_eq!(got, vec![cv(&[1, 0, 0]), cv(&[0, 1, 0]), cv(&[0, 0, 1])]);
    }

    #[test]
    fn binomial_support() {
        let got: Vec<_> = enumerate_compositions(2, 2).unwrap().collect();
        assert_eq!(got, vec![cv(&[2, 0]), cv(&[1, 1]), cv(&[0, 2])]);
    }

    #[test]
    fn reverse_lex_order_for_k3() {
        let got: Vec<Vec<u32>> = enumerate_compositions(2, 3).unwrap().map(|c| c.into_inner()).collect();
        assert_eq!(
            got,
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![0, 2, 0], vec![0, 1, 1], vec![0, 0, 2]]
        );
    }

    #[test]
    fn zero_trials_has_one_point() {
        let got: Vec<_> = enumerate_compositions(0, 3).unwrap().collect();
        assert_eq!(got, vec![cv(&[0, 0, 0])]);
        assert_eq!(space_size(0, 3).unwrap(), 1);
    }

    #[test]
    fn sizes() {
        assert_eq!(space_size(1, 7).unwrap(), 7);
        // binom(22, 20) = 22 * 21 / 2
        assert_eq!(space_size(20, 3).unwrap(), 231);
        // binom(103, 3) = 103 * 102 * 101 / 6
        assert_eq!(space_size(100, 4).unwrap(), 176_851);
        assert_eq!(enumerate_compositions(20, 3).unwrap().count(), 231);
    }

    #[test]
    fn rejects_bad_k_and_overflow() {
        assert!(matches!(space_size(3, 1), Err(CmmError::InvalidArgument(_))));
        assert!(enumerate_compositions(3, 1).is_err());
        assert!(matches!(space_size(u32::MAX, 40), Err(CmmError::SpaceOverflow { .. })));
        assert!(matches!(enumerate_compositions(1000, 6), Err(CmmError::SpaceTooLarge { .. })));
    }

    #[test]
    fn multinomial_coefficients() {
        assert_eq!(log_multinomial_coeff(&cv(&[2, 0, 0])), 0.0);
        assert!((log_multinomial_coeff(&cv(&[1, 1])) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn center_points_from_the_text() {
        let s = distinguished_subsets(20, 3).unwrap();
        assert_eq!((s.q, s.r), (6, 2));
        assert_eq!(s.centers, vec![cv(&[7, 7, 6]), cv(&[7, 6, 7]), cv(&[6, 7, 7])]);
        assert_eq!(s.vertices, vec![cv(&[20, 0, 0]), cv(&[0, 20, 0]), cv(&[0, 0, 20])]);

        let s = distinguished_subsets(21, 3).unwrap();
        assert_eq!(s.centers, vec![cv(&[7, 7, 7])]);

        let s = distinguished_subsets(4, 2).unwrap();
        assert_eq!(s.centers, vec![cv(&[2, 2])]);
        assert_eq!(s.vertices, vec![cv(&[4, 0]), cv(&[0, 4])]);
    }

    #[test]
    fn count_vector_validation() {
        assert!(CountVector::new(vec![3]).is_err());
        assert!(CountVector::with_total(vec![1, 2], 4).is_err());
        assert_eq!(CountVector::with_total(vec![1, 3], 4).unwrap().total(), 4);
    }
}
