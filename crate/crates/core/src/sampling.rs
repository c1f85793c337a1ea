//! Axis-aligned domain boxes and deterministic sample sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    bounds: Vec<(f64, f64)>,
}

impl DomainBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Invalid("domain box has no coordinates".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Invalid(format!(
                    "domain interval for x{} is empty or not finite: [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(DomainBox { bounds })
    }

    /// The cube `[-half_width, half_width]^n`.
    pub fn cube(n: usize, half_width: f64) -> Self {
        Self::new(vec![(-half_width, half_width); n]).expect("positive half width")
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len() && x.iter().zip(&self.bounds).all(|(v, &(lo, hi))| *v >= lo && *v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    /// Box with the same center and every side scaled by `factor`.
    pub fn shrink(&self, factor: f64) -> DomainBox {
        let bounds = self
            .bounds
            .iter()
            .map(|&(lo, hi)| {
                let c = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo) * factor;
                (c - h, c + h)
            })
            .collect();
        DomainBox { bounds }
    }

    /// Halton points mapped into the box. `seed` offsets the start of the
    /// sequence so different seeds give different (still low-discrepancy)
    /// sets.
    pub fn halton_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        assert!(
            self.dim() <= PRIMES.len(),
            "Halton sampling supports n <= {}",
            PRIMES.len()
        );
        let start = 1 + (seed % 4096);
        (0..count as u64)
            .map(|k| {
                self.bounds
                    .iter()
                    .zip(PRIMES)
                    .map(|(&(lo, hi), base)| lo + (hi - lo) * radical_inverse(start + k, base))
                    .collect()
            })
            .collect()
    }

    /// Uniform pseudo-random point.
    pub fn random_point(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
    }

    pub fn random_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.random_point(&mut rng)).collect()
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut value = 0.0;
    while k > 0 {
        value += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    value
}
