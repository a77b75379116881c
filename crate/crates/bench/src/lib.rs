//! Shared fixtures for the solver benchmarks.

use ristep::{build_mesh, make_model_fem, DiagonalMetric, FemModel};

/// Deterministic pseudo-random vector, independent of external crates.
pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

pub fn lumped_metric(n: usize) -> DiagonalMetric {
    let w: Vec<f64> = noise(n, 7)
        .iter()
        .map(|x| 0.5 + x.abs())
        .collect();
    DiagonalMetric::from_lumped_weights(w)
}

pub fn fem_model(n_per_side: usize) -> FemModel {
    make_model_fem(&build_mesh(n_per_side).unwrap())
}
