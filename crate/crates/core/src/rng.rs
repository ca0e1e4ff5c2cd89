//! Seeded random streams.
//!
//! All randomness flows through [`Rng`] (ChaCha8), seeded from a `u64` and
//! split into independent numbered streams so that, for example, metric
//! evaluation never perturbs the training sequence.

use crate::Matrix;
use rand::{Rng as _, SeedableRng};
use rand_distr::StandardNormal;

pub type Rng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator family rooted at `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A `rows × cols` matrix of independent standard normal draws.
pub fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| standard_normal(rng)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Uniform draw from `[0, 1)`.
pub fn unit(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// `k` distinct indices from `0..n`, in draw order.
pub fn sample_without_replacement(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}
