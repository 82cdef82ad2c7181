mod common;

use proptest::prelude::*;
use rashomon::analysis::{effect_binning, treatment_contrast, BinOptions};
use rashomon::enumerate::{enumerate_rps, reference, EnumerationOptions, ReferenceMode};
use rashomon::hasse::{FeatureCombination, FeatureSpace};
use rashomon::io::{artifact_bytes, parse_artifact, Artifact, FeatureDecl, RunConfig};
use rashomon::loss::LossConfig;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn larger_epsilon_nests(seed in 0u64..10_000, lambda in 0.01f64..0.3, e1 in 0.0f64..0.3, extra in 0.0f64..0.3) {
        let space = FeatureSpace::new(vec![2, 3]).unwrap();
        let d = common::random_dataset(&space, 2, seed);
        let cfg = LossConfig::new(lambda);
        let opts = EnumerationOptions::new();
        let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
        let small = enumerate_rps(&d, &cfg, q0, e1, &opts).unwrap();
        let large = enumerate_rps(&d, &cfg, q0, e1 + extra, &opts).unwrap();
        prop_assert!(small.len() <= large.len());
        for e in &small.entries {
            prop_assert!(large.contains(&e.partition));
        }
    }

    #[test]
    fn binning_is_scale_equivariant(
        values in prop::collection::vec((-10.0f64..10.0, 0.0f64..1.0), 1..40),
        scale in 0.01f64..100.0,
    ) {
        let base = effect_binning(&values, BinOptions::default());
        let scaled_values: Vec<(f64, f64)> = values.iter().map(|&(v, w)| (v * scale, w)).collect();
        let scaled = effect_binning(&scaled_values, BinOptions::default());
        match (base, scaled) {
            (Ok(a), Ok(b)) => {
                prop_assert!((b.sd_scale - a.sd_scale * scale).abs() <= 1e-9 * b.sd_scale.max(1.0));
                // values sitting on ±sd may flip bins under rounding
                let on_edge = values.iter().any(|&(v, _)| (v.abs() - a.sd_scale).abs() < 1e-9 * a.sd_scale.max(1.0));
                if !on_edge {
                    prop_assert_eq!(a.masses, b.masses);
                }
                let total: f64 = values.iter().map(|v| v.1).sum();
                prop_assert!((a.masses.iter().sum::<f64>() - total).abs() < 1e-9);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn contrast_is_antisymmetric(seed in 0u64..10_000, x in 0usize..3, eps in 0.0f64..0.4) {
        let space = FeatureSpace::new(vec![2, 3]).unwrap();
        let d = common::random_dataset(&space, 2, seed);
        let cfg = LossConfig::new(0.05);
        let opts = EnumerationOptions::new();
        let (q0, _) = reference(&d, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
        let rps = enumerate_rps(&d, &cfg, q0, eps, &opts).unwrap();
        let x = FeatureCombination::new(vec![x]);
        let forward = treatment_contrast(&rps, &d, &cfg, &x, 0, 1, 0).unwrap();
        let backward = treatment_contrast(&rps, &d, &cfg, &x, 0, 0, 1).unwrap();
        for (f, b) in forward.iter().zip(&backward) {
            prop_assert_eq!(f.0, -b.0);
            prop_assert_eq!(f.1, b.1);
        }
    }

    #[test]
    fn artifact_round_trips(seed in 0u64..10_000, lambda in 0.01f64..0.2, eps in 0.0f64..0.5) {
        let decl = |name: &str, n: usize| FeatureDecl { name: name.into(), levels: (0..n).map(|i| format!("l{i}")).collect() };
        let config = RunConfig::new(vec![decl("a", 2), decl("b", 3)], lambda, eps);
        let data = common::random_dataset(&config.space().unwrap(), 2, seed);
        let cfg = config.loss_config();
        let opts = config.enumeration_options();
        let (q0, _) = reference(&data, &cfg, &ReferenceMode::FullSplit, &opts).unwrap();
        let rps = enumerate_rps(&data, &cfg, q0, eps, &opts).unwrap();
        let a = Artifact { config, data, rps, partial: false };
        let text = String::from_utf8(artifact_bytes(&a).unwrap()).unwrap();
        prop_assert_eq!(parse_artifact(&text).unwrap(), a);
    }
}
