//! Seeded randomness for a single run: batch subsets, inner-loop lengths and
//! the weighted output draw.
//!
//! One [`RngState`] is owned by one run and consumed in a fixed call order,
//! so an identical seed reproduces the whole trace. ChaCha8 is used because
//! its stream is specified independently of platform and word size.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, StandardNormal};

use crate::error::{domain, Result};

/// Inner-loop lengths are capped at this multiple of `B/b`.
pub const INNER_CAP_FACTOR: u64 = 50;

#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    rng: ChaCha8Rng,
}

/// A drawn inner-loop length, after applying the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InnerLength {
    pub steps: u64,
    pub capped: bool,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform size-`m` subset of `0..n` without replacement, sorted ascending.
    pub fn sample_subset(&mut self, n: usize, m: usize) -> Result<Vec<usize>> {
        if m == 0 {
            return domain("subset size must be positive");
        }
        if m > n {
            return domain(format!("subset size {m} exceeds population {n}"));
        }
        if m == n {
            return Ok((0..n).collect());
        }
        let mut picked = index::sample(&mut self.rng, n, m).into_vec();
        picked.sort_unstable();
        Ok(picked)
    }

    /// `N ~ Geom(γ)` with `γ = B/(B+b)`, supported on `{0, 1, 2, ...}`:
    /// `P(N = k) = γ^k (1 − γ)` and `E[N] = γ/(1−γ) = B/b`.
    pub fn sample_geometric(&mut self, batch: usize, mini_batch: usize) -> Result<u64> {
        if batch == 0 || mini_batch == 0 {
            return domain("geometric parameters need B >= 1 and b >= 1");
        }
        // rand_distr counts failures before the first success, with success
        // probability 1 − γ = b/(B+b).
        let stop = mini_batch as f64 / (batch + mini_batch) as f64;
        let geom = Geometric::new(stop).map_err(|e| crate::Error::Domain(e.to_string()))?;
        Ok(geom.sample(&mut self.rng))
    }

    /// A geometric inner-loop length truncated at `50·⌈B/b⌉`.
    pub fn sample_inner_length(&mut self, batch: usize, mini_batch: usize) -> Result<InnerLength> {
        let raw = self.sample_geometric(batch, mini_batch)?;
        let cap = inner_cap(batch, mini_batch);
        Ok(InnerLength {
            steps: raw.min(cap),
            capped: raw > cap,
        })
    }

    /// Index `j` drawn with probability `weights[j] / Σ weights`.
    pub fn sample_output_index(&mut self, weights: &[f64]) -> Result<usize> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return domain("output weights must be finite and non-negative");
        }
        let dist = WeightedIndex::new(weights).map_err(|e| crate::Error::Domain(format!("output weights: {e}")))?;
        Ok(dist.sample(&mut self.rng))
    }

    pub fn standard_normal(&mut self, len: usize) -> Vec<f64> {
        (0..len).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random()
    }
}

pub fn inner_cap(batch: usize, mini_batch: usize) -> u64 {
    INNER_CAP_FACTOR * (batch as u64).div_ceil(mini_batch as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn full_subset_is_identity() {
        let mut rng = RngState::new(1);
        assert_eq!(rng.sample_subset(7, 7).unwrap(), (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn subset_errors() {
        let mut rng = RngState::new(1);
        assert!(matches!(rng.sample_subset(5, 0), Err(Error::Domain(_))));
        assert!(matches!(rng.sample_subset(5, 6), Err(Error::Domain(_))));
    }

    #[test]
    fn geometric_errors_and_zero_mass() {
        let mut rng = RngState::new(2);
        assert!(rng.sample_geometric(0, 1).is_err());
        assert!(rng.sample_geometric(1, 0).is_err());
        // B = b = 1: P(N = 0) = 1/2
        let draws = 200_000;
        let zeros = (0..draws).filter(|_| rng.sample_geometric(1, 1).unwrap() == 0).count();
        let p = zeros as f64 / draws as f64;
        assert!((p - 0.5).abs() < 0.005, "P(N=0) = {p}");
    }

    #[test]
    fn single_epoch_output_and_zero_weights() {
        let mut rng = RngState::new(3);
        for _ in 0..100 {
            assert_eq!(rng.sample_output_index(&[2.5]).unwrap(), 0);
            assert_ne!(rng.sample_output_index(&[1.0, 0.0, 3.0]).unwrap(), 1);
        }
        assert!(rng.sample_output_index(&[0.0, 0.0]).is_err());
        assert!(rng.sample_output_index(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn inner_length_respects_cap() {
        assert_eq!(inner_cap(10, 3), 200);
        let mut rng = RngState::new(4);
        for _ in 0..10_000 {
            let len = rng.sample_inner_length(10, 3).unwrap();
            assert!(len.steps <= 200);
            assert!(!len.capped || len.steps == 200);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(99);
        let mut b = RngState::new(99);
        for _ in 0..50 {
            assert_eq!(a.sample_subset(100, 7).unwrap(), b.sample_subset(100, 7).unwrap());
            assert_eq!(a.sample_geometric(30, 2).unwrap(), b.sample_geometric(30, 2).unwrap());
        }
    }
}
