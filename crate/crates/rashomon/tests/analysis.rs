mod common;

use rashomon::analysis::*;
use rashomon::enumerate::{enumerate_rps, reference, EnumerationOptions, RashomonSet, ReferenceMode, RpsEntry};
use rashomon::hasse::{FeatureCombination, FeatureSpace, Partition, Profile};
use rashomon::loss::{effects, Dataset, LossConfig};

fn entry(p: Partition, q: f64) -> RpsEntry {
    RpsEntry { sigmas: Vec::new(), merges: Vec::new(), partition: p, q, weight: 0.0 }
}

fn manual(profiles: Vec<Profile>, entries: Vec<RpsEntry>) -> RashomonSet {
    let q0 = entries.iter().map(|e| e.q).fold(f64::INFINITY, f64::min);
    RashomonSet::new(profiles, q0, 0.0, q0, entries)
}

fn noiseless(space: &FeatureSpace, means: &[f64], reps: usize) -> Dataset {
    let obs = means.iter().enumerate().flat_map(|(c, &m)| (0..reps).map(move |_| (c, m)));
    Dataset::from_indexed(space.clone(), obs).unwrap()
}

#[test]
fn singleton_rps_mean_is_that_partitions_fit() {
    let space = FeatureSpace::single_profile(vec![3, 3]).unwrap();
    let d = common::random_dataset(&space, 4, 3);
    let cfg = LossConfig::new(0.05);
    let opts = EnumerationOptions::new();
    let (q0, best) = reference(&d, &cfg, &ReferenceMode::Map, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 0.0, &opts).unwrap();
    assert_eq!(rps.len(), 1);
    assert_eq!(rps.entries[0].partition, best);
    assert_eq!(rps.entries[0].weight, 1.0);
    let mean = conditional_mean_effects(&rps, &d, &cfg).unwrap();
    assert_eq!(mean.values, effects(&best, &d, &cfg).unwrap().values);
}

#[test]
fn equal_q_entries_average_arithmetically() {
    let space = FeatureSpace::single_profile(vec![2]).unwrap();
    let d = Dataset::from_indexed(space, [(0, 1.0), (0, 3.0), (1, 6.0)]).unwrap();
    let cfg = LossConfig::new(0.1);
    let split = Partition::from_sets(vec![vec![0], vec![1]]);
    let pooled = Partition::from_sets(vec![vec![0, 1]]);
    let rps = manual(vec![Profile::full(1)], vec![entry(split, 1.0), entry(pooled, 1.0)]);
    assert!(rps.entries.iter().all(|e| e.weight == 0.5));
    let mean = conditional_mean_effects(&rps, &d, &cfg).unwrap();
    // split: (2, 6); pooled: (10/3, 10/3)
    assert!((mean.values[0] - (2.0 + 10.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!((mean.values[1] - (6.0 + 10.0 / 3.0) / 2.0).abs() < 1e-12);
}

#[test]
fn empty_rps_has_no_mean() {
    let space = FeatureSpace::single_profile(vec![2]).unwrap();
    let d = Dataset::from_indexed(space, [(0, 1.0), (1, 2.0)]).unwrap();
    let rps = RashomonSet::new(vec![Profile::full(1)], 1.0, 0.0, 1.0, Vec::new());
    assert!(conditional_mean_effects(&rps, &d, &LossConfig::new(0.1)).is_err());
}

#[test]
fn constant_outcome_gives_constant_mean() {
    let space = FeatureSpace::new(vec![3, 2]).unwrap();
    let d = noiseless(&space, &[2.5; 6], 3);
    let cfg = LossConfig::new(0.01);
    let opts = EnumerationOptions::new();
    let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 0.5, &opts).unwrap();
    assert!(rps.len() > 1);
    let mean = conditional_mean_effects(&rps, &d, &cfg).unwrap();
    assert!(mean.values.iter().all(|v| (v - 2.5).abs() < 1e-12), "{:?}", mean.values);
}

#[test]
fn approximation_bound_formula() {
    assert!((approximation_error_bound(2, 4, 0.3).unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(approximation_error_bound(2, 4, 0.5).unwrap(), 0.0);
    assert_eq!(approximation_error_bound(1, 4, 0.2).unwrap(), 1.0);
    // small regime without clamping
    assert!((approximation_error_bound(9, 10, 0.05).unwrap() - 0.1).abs() < 1e-12);
    assert!(approximation_error_bound(5, 4, 0.3).is_err());
    assert!(approximation_error_bound(1, 0, 0.3).is_err());
    assert!(approximation_error_bound(1, 4, 0.0).is_err());
    assert!(approximation_error_bound(1, 4, 1.0).is_err());
}

#[test]
fn sup_cdf_error_examples() {
    let full = [(0.0, 0.1), (1.0, 0.45), (2.0, 0.45)];
    assert_eq!(empirical_sup_cdf_error(&full, &full).unwrap(), 0.0);

    let restricted = [(1.0, 0.5), (2.0, 0.5)];
    let err = empirical_sup_cdf_error(&full, &restricted).unwrap();
    assert!((err - 0.1).abs() < 1e-12);
    assert!(err <= approximation_error_bound(2, 3, 0.45).unwrap());

    let disjoint = [(5.0, 1.0)];
    assert_eq!(empirical_sup_cdf_error(&full, &disjoint).unwrap(), 1.0);

    assert!(empirical_sup_cdf_error(&[(0.0, 0.7)], &full).is_err());
    assert!(empirical_sup_cdf_error(&full, &[(f64::NAN, 1.0)]).is_err());
}

/// Binary treatment (feature 0) and a three-level context feature.
fn treatment_space() -> FeatureSpace {
    FeatureSpace::new(vec![2, 3]).unwrap()
}

fn cell(space: &FeatureSpace, t: usize, x: usize) -> usize {
    space.index_of(&FeatureCombination::new(vec![t, x])).unwrap()
}

#[test]
fn cate_from_pool_means() {
    let space = treatment_space();
    let mut means = vec![0.0; 6];
    means[cell(&space, 1, 2)] = 5.0;
    means[cell(&space, 0, 2)] = 3.0;
    let d = noiseless(&space, &means, 2);
    let cfg = LossConfig::new(0.1);
    let singletons = Partition::from_sets((0..6).map(|c| vec![c]).collect());
    let rps = manual(space.profiles(), vec![entry(singletons, 1.0)]);
    let x = FeatureCombination::new(vec![2]);
    assert_eq!(cate(&rps, &d, &cfg, &x, 0).unwrap(), vec![(2.0, 1.0)]);

    // treated and control in one pool: structural zero
    let mut sets: Vec<Vec<usize>> = (0..6).filter(|&c| c != cell(&space, 1, 2) && c != cell(&space, 0, 2)).map(|c| vec![c]).collect();
    sets.push(vec![cell(&space, 0, 2), cell(&space, 1, 2)]);
    let rps = manual(space.profiles(), vec![entry(Partition::from_sets(sets), 1.0)]);
    assert_eq!(cate(&rps, &d, &cfg, &x, 0).unwrap(), vec![(0.0, 1.0)]);
}

#[test]
fn cate_rejects_bad_queries() {
    let space = treatment_space();
    let d = noiseless(&space, &[1.0; 6], 1);
    let cfg = LossConfig::new(0.1);
    let rps = manual(space.profiles(), vec![entry(Partition::from_sets((0..6).map(|c| vec![c]).collect()), 1.0)]);
    assert!(cate(&rps, &d, &cfg, &FeatureCombination::new(vec![3]), 0).is_err());
    assert!(cate(&rps, &d, &cfg, &FeatureCombination::new(vec![1, 1]), 0).is_err());
    // the context feature has three levels, so it is not a binary treatment
    assert!(cate(&rps, &d, &cfg, &FeatureCombination::new(vec![1]), 1).is_err());
}

#[test]
fn cate_sign_distribution_matches_recomputation() {
    let space = treatment_space();
    let d = common::random_dataset(&space, 4, 17);
    let cfg = LossConfig::new(0.05);
    let opts = EnumerationOptions::new();
    let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 0.3, &opts).unwrap();
    assert!(rps.len() > 3);
    for x in 0..3 {
        let got = cate(&rps, &d, &cfg, &FeatureCombination::new(vec![x]), 0).unwrap();
        let (a, b) = (cell(&space, 1, x), cell(&space, 0, x));
        let mut signs = [0.0; 3];
        for (e, &(v, w)) in rps.entries.iter().zip(&got) {
            let mean_of = |c: usize| {
                let pool = &e.partition.pools()[e.partition.pool_of(c).unwrap()];
                let (n, s) = pool.members().iter().fold((0.0, 0.0), |(n, s), &k| {
                    let st = d.cell(k);
                    (n + st.count as f64, s + st.count as f64 * st.mean)
                });
                s / n
            };
            let want = if e.partition.pool_of(a) == e.partition.pool_of(b) { 0.0 } else { mean_of(a) - mean_of(b) };
            assert!((v - want).abs() < 1e-12);
            assert_eq!(w, e.weight);
            signs[if want < 0.0 { 0 } else if want == 0.0 { 1 } else { 2 }] += w;
        }
        let mut got_signs = [0.0; 3];
        for &(v, w) in &got {
            got_signs[if v < 0.0 { 0 } else if v == 0.0 { 1 } else { 2 }] += w;
        }
        for i in 0..3 {
            assert!((signs[i] - got_signs[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn binning_examples() {
    let zeros = vec![(0.0, 0.25); 4];
    let b = effect_binning(&zeros, BinOptions { sd_scale: Some(1.0), ..Default::default() }).unwrap();
    assert_eq!(b.mass(Bin::Zero), 1.0);

    let b = effect_binning(&vec![(2.0, 1.0)], BinOptions { sd_scale: Some(1.0), ..Default::default() }).unwrap();
    assert_eq!(b.mass(Bin::LargePositive), 1.0);

    assert_eq!(classify(-1.0, 1.0, 0.0), Bin::SmallNegative);
    assert_eq!(classify(-1.5, 1.0, 0.0), Bin::LargeNegative);
    assert_eq!(classify(1.0, 1.0, 0.0), Bin::SmallPositive);
    assert_eq!(classify(0.05, 1.0, 0.1), Bin::Zero);

    assert!(effect_binning(&Vec::new(), BinOptions::default()).is_err());
    assert!(effect_binning(&vec![(1.0, 1.0)], BinOptions { sd_scale: Some(0.0), ..Default::default() }).is_err());
}

#[test]
fn binning_matches_direct_classifier() {
    let mut rng = common::rng(5);
    use rand::Rng;
    let values: WeightedValues = (0..200)
        .map(|i| {
            let v = if i % 7 == 0 { 0.0 } else { rng.random_range(-3.0..3.0) };
            (v, rng.random_range(0.0..1.0))
        })
        .collect();
    let sd = effect_sd(&values, false);
    let b = effect_binning(&values, BinOptions::default()).unwrap();
    assert_eq!(b.sd_scale, sd);
    let mut want = [0.0; 5];
    for &(v, w) in &values {
        let k = if v == 0.0 {
            2
        } else if v < -sd {
            0
        } else if v < 0.0 {
            1
        } else if v <= sd {
            3
        } else {
            4
        };
        want[k] += w;
    }
    for k in 0..5 {
        assert!((b.masses[k] - want[k]).abs() < 1e-12);
    }
    let total: f64 = values.iter().map(|v| v.1).sum();
    assert!((b.masses.iter().sum::<f64>() - total).abs() < 1e-12);
}

#[test]
fn weighted_sd_differs_from_unweighted() {
    let values = vec![(0.0, 0.9), (10.0, 0.1)];
    assert!((effect_sd(&values, false) - 5.0).abs() < 1e-12);
    assert!((effect_sd(&values, true) - 3.0).abs() < 1e-12);
}

#[test]
fn summary_of_singleton_is_one_cell_at_ratio_zero() {
    let space = FeatureSpace::single_profile(vec![3]).unwrap();
    let d = noiseless(&space, &[0.0, 0.0, 10.0], 3);
    let cfg = LossConfig::new(0.01);
    let opts = EnumerationOptions::new();
    let (q0, _) = reference(&d, &cfg, &ReferenceMode::Map, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 0.0, &opts).unwrap();
    assert_eq!(rps.len(), 1);
    let s = rps_summary(&rps, DEFAULT_RATIO_BINS).unwrap();
    assert_eq!(s.histogram.len(), 1);
    assert_eq!(s.histogram[0].ratio_high, 0.0);
    assert_eq!(s.histogram[0].weight, 1.0);
    assert_eq!(s.curve, vec![(rps.entries[0].q, 2)]);
}

#[test]
fn summary_of_equal_q_entries() {
    let three = Partition::from_sets(vec![vec![0], vec![1], vec![2, 3, 4]]);
    let five = Partition::from_sets((0..5).map(|c| vec![c]).collect());
    // no profiles: split frequencies need per-profile Σ
    let rps = manual(Vec::new(), vec![entry(three, 2.0), entry(five, 2.0)]);
    let s = rps_summary(&rps, 4).unwrap();
    assert_eq!(s.histogram.len(), 2);
    assert_eq!(s.histogram.iter().map(|c| c.num_pools).collect::<Vec<_>>(), vec![3, 5]);
    assert!(s.histogram.iter().all(|c| c.weight == 0.5 && c.count == 1));
}

#[test]
fn split_frequency_of_a_class_split_everywhere() {
    let space = FeatureSpace::single_profile(vec![3]).unwrap();
    let d = noiseless(&space, &[0.0, 0.1, 10.0], 4);
    let cfg = LossConfig::new(0.001);
    let opts = EnumerationOptions::new();
    let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 5.0, &opts).unwrap();
    assert_eq!(rps.len(), 2);
    let s = rps_summary(&rps, DEFAULT_RATIO_BINS).unwrap();
    let edge = |level: usize| s.split_frequencies.iter().find(|f| f.level == level).unwrap().frequency;
    assert!((edge(2) - 1.0).abs() < 1e-12);
    assert!(edge(1) > 0.0 && edge(1) < 1.0);
    for c in &s.histogram {
        assert!(c.ratio_low < 0.0 && c.ratio_high <= 0.0);
    }
}

#[test]
fn relative_ratio_is_never_positive() {
    assert_eq!(relative_ratio(3.0, 3.0), 0.0);
    assert!(relative_ratio(1e6, 0.0) == -1.0);
    assert!((relative_ratio(1e-20, 0.0) + 1e-20).abs() < 1e-30);
}

#[test]
fn size_curve_counts_entries_below_each_threshold() {
    let space = FeatureSpace::single_profile(vec![2, 3]).unwrap();
    let d = common::random_dataset(&space, 3, 8);
    let cfg = LossConfig::new(0.05);
    let opts = EnumerationOptions::new();
    let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
    let rps = enumerate_rps(&d, &cfg, q0, 0.4, &opts).unwrap();
    let curve = size_vs_epsilon(&rps, &[0.0, 0.1, 0.2, 0.4]);
    assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
    assert_eq!(curve[3].1, rps.len());
    let smaller = enumerate_rps(&d, &cfg, q0, 0.1, &opts).unwrap();
    assert_eq!(curve[1].1, smaller.len());
}
