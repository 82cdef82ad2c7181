mod common;

use common::random_dataset;
use rashomon::enumerate::{brute_force_global, enumerate_rps, pool_cap, EnumerationOptions};
use rashomon::hasse::{is_permissible_global, FeatureSpace, Partition};
use rashomon::loss::{q_value, LossConfig};

fn oracle_case(levels: Vec<usize>, seed: u64, lambda: f64, eps: f64) {
    let space = FeatureSpace::new(levels).unwrap();
    let d = random_dataset(&space, 4, seed);
    let cfg = LossConfig::new(lambda);
    let profiles = d.realized_profiles();
    // q0 from the single best all-pooled-within-profile partition keeps θ moderate
    let full: Partition = Partition::from_sets(profiles.iter().flat_map(|&p| space.profile_cells(p)).map(|c| vec![c]).collect());
    let q0 = q_value(&full, &d, &cfg).unwrap();
    let theta = q0 * (1.0 + eps);
    let h = pool_cap(theta, &cfg, None);
    let rps = enumerate_rps(&d, &cfg, q0, eps, &EnumerationOptions::new()).unwrap();
    let got: Vec<Partition> = {
        let mut v: Vec<Partition> = rps.entries.iter().map(|e| e.partition.clone()).collect();
        v.sort();
        v
    };
    let want: Vec<Partition> = brute_force_global(&d, &cfg, theta, h, &profiles).unwrap().into_iter().map(|x| x.0).collect();
    assert_eq!(got, want, "seed {seed} lambda {lambda} eps {eps}");
    for e in &rps.entries {
        assert!(is_permissible_global(&space, &e.partition).unwrap());
    }
}

#[test]
fn cross_profile_enumeration_matches_global_oracle() {
    for seed in 0..12 {
        for (lambda, eps) in [(0.05, 0.0), (0.1, 0.2), (0.2, 0.5), (0.02, 0.1)] {
            oracle_case(vec![3, 3], seed, lambda, eps);
        }
    }
}

#[test]
fn three_feature_binary_space_matches_global_oracle() {
    for seed in 0..6 {
        for (lambda, eps) in [(0.1, 0.2), (0.05, 0.4)] {
            oracle_case(vec![2, 2, 2], 50 + seed, lambda, eps);
        }
    }
}

#[test]
fn single_feature_with_control_matches_global_oracle() {
    for seed in 0..6 {
        oracle_case(vec![3], 80 + seed, 0.1, 0.5);
        oracle_case(vec![5], 90 + seed, 0.05, 0.3);
    }
}
