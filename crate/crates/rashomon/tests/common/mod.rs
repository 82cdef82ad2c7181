#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rashomon::hasse::{FeatureSpace, PartitionMatrix, Profile};
use rashomon::loss::{Dataset, LossConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Raw `(dense index, y)` draws: `per_cell` per combination around random
/// integer means in 0..4 with unit normal noise.
pub fn random_observations(space: &FeatureSpace, per_cell: usize, seed: u64) -> Vec<(usize, f64)> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let means: Vec<f64> = (0..space.size()).map(|_| r.random_range(0..4) as f64).collect();
    (0..space.size())
        .flat_map(|c| (0..per_cell).map(move |_| c))
        .map(|c| (c, means[c] + noise.sample(&mut r)))
        .collect()
}

/// `per_cell` draws per combination around random cell means on a coarse grid,
/// so nearby cells often share a mean.
pub fn random_dataset(space: &FeatureSpace, per_cell: usize, seed: u64) -> Dataset {
    Dataset::from_indexed(space.clone(), random_observations(space, per_cell, seed)).unwrap()
}

/// Q of every σ of a profile, via the brute-force oracle at θ = ∞.
pub fn all_qs(d: &Dataset, cfg: &LossConfig, profile: Profile) -> Vec<(PartitionMatrix, f64)> {
    let all = rashomon::enumerate::brute_force_profile(profile, usize::MAX, d, f64::INFINITY, cfg).unwrap();
    let obj = rashomon::enumerate::ProfileObjective::new(d, cfg, profile).unwrap();
    all.into_iter().map(|s| { let q = obj.q(&s).unwrap(); (s, q) }).collect()
}

/// Thresholds at the given quantiles of the Q values.
pub fn quantile_thresholds(qs: &[f64], quantiles: &[f64]) -> Vec<f64> {
    let mut v = qs.to_vec();
    v.sort_by(f64::total_cmp);
    quantiles.iter().map(|&p| v[((v.len() - 1) as f64 * p).round() as usize]).collect()
}
