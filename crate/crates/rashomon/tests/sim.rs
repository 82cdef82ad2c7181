use rashomon::enumerate::{brute_force_profile, EnumerationOptions, ProfileObjective, ReferenceMode};
use rashomon::hasse::{Partition, Profile};
use rashomon::loss::{effects, q_value, LossConfig};
use rashomon::sim::*;

fn noiseless(mut spec: SimulationSpec) -> SimulationSpec {
    spec.noise_sd.iter_mut().for_each(|s| *s = 0.0);
    spec
}

fn grid_protocol(reference: ReferenceMode, epsilons: Vec<f64>) -> RecoveryProtocol {
    RecoveryProtocol {
        cfg: LossConfig::new(dosage::LAMBDA),
        reference,
        threshold: ThresholdRule::Epsilons(epsilons),
        options: EnumerationOptions::new(),
    }
}

#[test]
fn zero_noise_reproduces_cell_means() {
    let spec = noiseless(dosage::spec(3, 1));
    let d = generate(&spec).unwrap();
    for (c, st) in d.cells().iter().enumerate() {
        assert_eq!(st.count, 3);
        assert_eq!(st.mean, spec.cell_means[c]);
        assert_eq!(st.m2, 0.0);
    }
}

#[test]
fn generation_is_seeded() {
    let a = generate_replication(&dosage::spec(4, 9), 2).unwrap();
    assert_eq!(a, generate_replication(&dosage::spec(4, 9), 2).unwrap());
    assert_ne!(a, generate_replication(&dosage::spec(4, 10), 2).unwrap());
    assert_ne!(a, generate_replication(&dosage::spec(4, 9), 3).unwrap());
}

#[test]
fn large_samples_match_means() {
    let spec = dosage::spec(10_000, 7);
    let d = generate(&spec).unwrap();
    for (c, st) in d.cells().iter().enumerate() {
        assert!((st.mean - spec.cell_means[c]).abs() < 0.05, "cell {c}: {}", st.mean);
        let var = st.m2 / (st.count - 1) as f64;
        assert!((var - 1.0).abs() < 0.1);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let good = dosage::spec(2, 0);
    let mut s = good.clone();
    s.cell_means.pop();
    assert!(generate(&s).is_err());
    let mut s = good.clone();
    s.noise_sd[3] = -1.0;
    assert!(generate(&s).is_err());
    let mut s = good.clone();
    s.samples[0] = 0;
    assert!(generate(&s).is_err());
    // cells 0 and 15 are not adjacent
    let mut sets: Vec<Vec<usize>> = (1..15).map(|c| vec![c]).collect();
    sets.push(vec![0, 15]);
    let s = good.clone().with_truth(&Partition::from_sets(sets));
    assert!(generate(&s).is_err());
}

#[test]
fn spec_survives_toml() {
    let spec = intensity::spec(3);
    let text = toml::to_string(&spec).unwrap();
    let back: SimulationSpec = toml::from_str(&text).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn dosage_truth_is_the_noiseless_minimizer() {
    let spec = noiseless(dosage::spec(2, 0));
    let d = generate(&spec).unwrap();
    let cfg = LossConfig::new(dosage::LAMBDA);
    let profile = Profile::full(2);
    let obj = ProfileObjective::new(&d, &cfg, profile).unwrap();
    let all = brute_force_profile(profile, usize::MAX, &d, f64::INFINITY, &cfg).unwrap();
    assert_eq!(all.len(), 64);
    let truth = dosage::truth_sigma();
    let q_truth = obj.q(&truth).unwrap();
    for s in &all {
        if s != &truth {
            assert!(obj.q(s).unwrap() > q_truth, "{s}");
        }
    }
    assert_eq!(truth_q(&spec, &d, &cfg).unwrap(), Some(q_value(&dosage::truth(), &d, &cfg).unwrap()));
}

#[test]
fn huge_epsilon_covers_everything() {
    let t = run_recovery_experiment(&dosage::spec(3, 5), &grid_protocol(ReferenceMode::FullSplit, vec![1e9]), 3).unwrap();
    let row = &t.rows[0];
    assert_eq!((row.best_coverage, row.truth_recovery, row.mean_rps_size), (1.0, 1.0, 64.0));
}

#[test]
fn noiseless_rps_at_zero_epsilon_is_the_truth() {
    let spec = noiseless(dosage::spec(2, 0));
    let t = run_recovery_experiment(&spec, &grid_protocol(ReferenceMode::Map, vec![0.0]), 2).unwrap();
    let row = &t.rows[0];
    assert_eq!((row.best_coverage, row.truth_recovery, row.mean_rps_size), (1.0, 1.0, 1.0));
}

#[test]
fn recovery_grows_with_epsilon() {
    let eps = vec![0.0, 0.05, 0.1, 0.2, 0.4];
    let protocol = grid_protocol(ReferenceMode::FullSplit, eps.clone());
    let t = run_recovery_experiment(&dosage::spec(5, 11), &protocol, 10).unwrap();
    assert_eq!(t.rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(), eps);
    for w in t.rows.windows(2) {
        assert!(w[0].best_coverage <= w[1].best_coverage);
        assert!(w[0].truth_recovery <= w[1].truth_recovery);
        assert!(w[0].mean_rps_size <= w[1].mean_rps_size);
    }
    for o in &t.replications {
        for w in o.per_threshold.windows(2) {
            assert!(w[0].1 <= w[1].1);
            assert!(w[1].2 || !w[0].2);
            assert!(w[1].3 || !w[0].3);
        }
    }
    assert_eq!(t, run_recovery_experiment(&dosage::spec(5, 11), &protocol, 10).unwrap());
}

#[test]
fn mse_multiple_rule_reports_the_implied_epsilon() {
    let t = run_recovery_experiment(&dosage::spec(10, 3), &dosage::protocol(), 4).unwrap();
    assert_eq!(t.rows.len(), 1);
    let mean_eps = t.replications.iter().map(|o| o.per_threshold[0].0).sum::<f64>() / 4.0;
    assert!((t.rows[0].epsilon - mean_eps).abs() < 1e-12);
    assert!(t.rows[0].epsilon > 0.0);
    assert_eq!(t.to_tsv().lines().count(), 2);
}

#[test]
fn noiseless_linear_truth_is_recovered() {
    let spec = linear_dosage::spec(0.0, 1);
    let cfg = linear_dosage::cfg();
    let exp = run_linear_experiment(&spec, &cfg, &ReferenceMode::Map, 0.0, &EnumerationOptions::new()).unwrap();
    assert_eq!(exp.rps.len(), 1);
    assert_eq!(exp.truth_rank, Some(0));
    let d = generate(&spec).unwrap();
    let fitted = effects(&linear_dosage::truth(), &d, &cfg).unwrap();
    for (c, v) in fitted.values.iter().enumerate() {
        assert!((v - spec.cell_means[c]).abs() < 1e-9, "cell {c}");
    }
    let pools: usize = exp.rps.entries.iter().map(|e| e.num_pools()).sum();
    assert_eq!(exp.fits.len(), pools);
}

#[test]
fn linear_experiment_needs_linear_model() {
    let spec = linear_dosage::spec(1.0, 0);
    let r = run_linear_experiment(&spec, &LossConfig::new(0.1), &ReferenceMode::Map, 0.0, &EnumerationOptions::new());
    assert!(r.is_err());
}

#[test]
fn means_from_pools_evaluates_lines() {
    let space = linear_dosage::space();
    let t = linear_dosage::truth();
    assert!(means_from_pools(&space, &t, &[vec![1.0]]).is_err());
    let flat = means_from_pools(&space, &t, &vec![vec![2.0]; t.len()]).unwrap();
    assert!(flat.iter().all(|&m| m == 2.0));
    let coef = vec![vec![1.0, 1.0, 1.0, 1.0]; t.len()];
    let m = means_from_pools(&space, &t, &coef).unwrap();
    for (c, v) in m.iter().enumerate() {
        let k = space.combination(c);
        assert_eq!(*v, 1.0 + k.0.iter().sum::<usize>() as f64);
    }
}
