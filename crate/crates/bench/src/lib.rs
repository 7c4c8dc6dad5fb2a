//! Deterministic inputs shared by the benchmarks.

use dsid_core::kernels::l2_normalize;
use dsid_core::{FeaturePair, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    l2_normalize(&v).vector
}

/// `n` pairs of independent unit vectors in `d` dimensions.
pub fn unit_pairs(n: usize, d: usize, seed: u64) -> Vec<FeaturePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| FeaturePair::new(unit(&mut rng, d), unit(&mut rng, d)))
        .collect()
}

/// Uniform inputs in [-1, 1) with labels in 0..6 for both tasks.
pub fn random_batch(n: usize, d: usize, seed: u64) -> (Matrix, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect());
    let yt = (0..n).map(|_| rng.random_range(0..6)).collect();
    let yd = (0..n).map(|_| rng.random_range(0..6)).collect();
    (x, yt, yd)
}
