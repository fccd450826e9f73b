//! Seeded randomness.
//!
//! Every random draw in the crate goes through ChaCha8 seeded with
//! `seed_from_u64`, so a seed reproduces the same stream on every platform.
//! Normal deviates use the ziggurat sampler from `rand_distr`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Mat;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Mat {
    // filled row-major so the draw order matches reading the matrix left to right
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = normal(rng);
        }
    }
    m
}
