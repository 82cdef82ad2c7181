mod common;

use common::{all_qs, quantile_thresholds, random_dataset};
use rashomon::enumerate::{brute_force_profile, enumerate_profile, enumerate_profile_with, SearchOptions};
use rashomon::hasse::{FeatureSpace, Profile};
use rashomon::loss::LossConfig;

fn check_space(levels: Vec<usize>, datasets: u64, seed0: u64) {
    let space = FeatureSpace::single_profile(levels.clone()).unwrap();
    let profile = Profile::full(levels.len());
    for s in 0..datasets {
        let d = random_dataset(&space, 3, seed0 + s);
        let lambda = [0.02, 0.1, 0.4][(s % 3) as usize];
        let cfg = LossConfig::new(lambda);
        let qs: Vec<f64> = all_qs(&d, &cfg, profile).into_iter().map(|x| x.1).collect();
        for theta in quantile_thresholds(&qs, &[0.0, 0.05, 0.3, 0.7, 1.0]) {
            for h in [1, 2, 3, 5, usize::MAX] {
                let got = enumerate_profile(profile, h, &d, theta, &cfg).unwrap();
                let want = brute_force_profile(profile, h, &d, theta, &cfg).unwrap();
                assert_eq!(got, want, "levels {levels:?} seed {} theta {theta} h {h}", seed0 + s);
            }
        }
    }
}

#[test]
fn profile_search_matches_exhaustive_search() {
    check_space(vec![3, 3], 15, 100);
    check_space(vec![4, 4], 10, 200);
    check_space(vec![3, 3, 3], 8, 300);
    check_space(vec![2, 5], 8, 400);
    check_space(vec![5], 8, 500);
    check_space(vec![1, 4, 3], 6, 600);
}

#[test]
fn every_scan_origin_gives_the_same_set() {
    for (levels, seed) in [(vec![3, 4], 7u64), (vec![3, 3, 3], 8), (vec![2, 4, 3], 9)] {
        let space = FeatureSpace::single_profile(levels.clone()).unwrap();
        let profile = Profile::full(levels.len());
        let d = random_dataset(&space, 3, seed);
        let cfg = LossConfig::new(0.05);
        let qs: Vec<f64> = all_qs(&d, &cfg, profile).into_iter().map(|x| x.1).collect();
        for theta in quantile_thresholds(&qs, &[0.1, 0.5]) {
            let want = brute_force_profile(profile, usize::MAX, &d, theta, &cfg).unwrap();
            for (r, &l) in levels.iter().enumerate() {
                for j in 0..l.saturating_sub(1) {
                    let opts = SearchOptions { origin: Some((r, j)), observer: None };
                    let got = enumerate_profile_with(profile, usize::MAX, &d, theta, &cfg, opts).unwrap();
                    assert_eq!(got, want, "origin ({r}, {j})");
                }
            }
        }
    }
}
