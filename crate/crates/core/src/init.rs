//! Seeded parameter initialization.
//!
//! One 64-bit seed drives every draw. Model builders consume the stream in a
//! fixed order: TCM (pre-split convs, gates, post convs), then the filter
//! generator, then the backbone (per stage: stem conv, main blocks,
//! reflected block, fusion projection; then the classifier head).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ParamRng(ChaCha8Rng);

impl ParamRng {
    pub fn new(seed: u64) -> Self {
        ParamRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw in `[-bound, bound]`.
    pub fn symmetric<S: Scalar>(&mut self, bound: f64) -> S {
        S::lit(self.0.random_range(-bound..=bound))
    }

    pub fn uniform<S: Scalar>(&mut self, lo: f64, hi: f64) -> S {
        S::lit(self.0.random_range(lo..hi))
    }

    /// `n` draws from `U[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
    pub fn fan_in_uniform<S: Scalar>(&mut self, n: usize, fan_in: usize) -> Vec<S> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        (0..n).map(|_| self.symmetric(bound)).collect()
    }

    pub fn fill<S: Scalar>(&mut self, n: usize, lo: f64, hi: f64) -> Vec<S> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn byte(&mut self) -> u8 {
        self.0.random()
    }
}
