//! Shared fixtures for the benchmarks.

use rand::Rng as _;
use surropt::seed::rng_from_seed;
use surropt::{FunctionId, TestFunction};

/// `n` uniform points in the Levy box of dimension `d` with their values.
pub fn levy_sample(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let f = TestFunction::new(FunctionId::Levy, d, 1.0).expect("valid problem");
    let (lo, hi) = FunctionId::Levy.range();
    let mut rng = rng_from_seed(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(lo..hi)).collect())
        .collect();
    let y = x.iter().map(|p| f.eval_unchecked(p)).collect();
    (x, y)
}
