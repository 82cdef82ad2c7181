//! Self-check suites comparing the enumerator against exhaustive oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::enumerate::{
    brute_force_global, brute_force_profile, enumerate_profile, enumerate_profile_with, enumerate_rps, pool_cap,
    set_partitions, EnumerationOptions, NodeVisit, ProfileObjective, SearchOptions, BRUTE_FORCE_MAX_ENTRIES,
    GLOBAL_ORACLE_MAX_CELLS,
};
use crate::error::{Error, Result};
use crate::hasse::{
    check_profile_partition, count_pools_inclusion_exclusion, pools_from_sigma, FeatureSpace, PartitionMatrix, Profile,
    ProfileLayout,
};
use crate::loss::{Dataset, LossConfig};

/// Largest per-profile Σ size the bound-validity suite walks.
pub const BOUND_SUITE_MAX_ENTRIES: usize = 12;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failed += 1;
            if self.failures.len() < 10 {
                self.failures.push(what());
            }
        }
    }

    pub fn passed(&self) -> usize {
        self.cases - self.failed
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.suites.iter().all(|s| s.failed == 0)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("suite\tcases\tpassed\tfailed\n");
        for s in &self.suites {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", s.name, s.cases, s.passed(), s.failed));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub datasets: usize,
    /// Added to the oracle's threshold only; a non-zero value is a mutation
    /// that the suites must catch.
    pub threshold_skew: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, datasets: 5, threshold_skew: 0.0 }
    }
}

fn random_dataset(space: &FeatureSpace, per_cell: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let means: Vec<f64> = (0..space.size()).map(|_| rng.random_range(0..4) as f64).collect();
    let mut d = Dataset::new(space.clone());
    for (c, &m) in means.iter().enumerate() {
        for _ in 0..per_cell {
            let z: f64 = StandardNormal.sample(rng);
            d.push_index(c, m + z)?;
        }
    }
    Ok(d)
}

fn thresholds(d: &Dataset, cfg: &LossConfig, profile: Profile) -> Result<Vec<f64>> {
    let obj = ProfileObjective::new(d, cfg, profile)?;
    let all = brute_force_profile(profile, usize::MAX, d, f64::INFINITY, cfg)?;
    let mut qs = all.iter().map(|s| obj.q(s)).collect::<Result<Vec<_>>>()?;
    qs.sort_by(f64::total_cmp);
    Ok([0.05, 0.3, 0.7].iter().map(|p| qs[((qs.len() - 1) as f64 * p).round() as usize]).collect())
}

/// Per-profile search against the exhaustive oracle.
pub fn profile_oracle_suite(datasets: &[(Dataset, LossConfig)], skew: f64) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("profile-oracle");
    for (i, (d, cfg)) in datasets.iter().enumerate() {
        for profile in d.realized_profiles() {
            if ProfileLayout::new(d.space(), profile).num_entries() > BRUTE_FORCE_MAX_ENTRIES {
                return Err(Error::TooLarge(format!("profile {profile} is too large for the oracle")));
            }
            for theta in thresholds(d, cfg, profile)? {
                for h in [2, usize::MAX] {
                    let got = enumerate_profile(profile, h, d, theta, cfg)?;
                    let want = brute_force_profile(profile, h, d, theta + skew, cfg)?;
                    suite.record(got == want, || format!("dataset {i} profile {profile} theta {theta} cap {h}"));
                }
            }
        }
    }
    Ok(suite)
}

/// Full enumeration with cross-profile pooling against the global oracle.
pub fn global_oracle_suite(datasets: &[(Dataset, LossConfig)], skew: f64) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("global-oracle");
    for (i, (d, cfg)) in datasets.iter().enumerate() {
        let profiles = d.realized_profiles();
        let cells: usize = profiles.iter().map(|&p| d.space().profile_cells(p).len()).sum();
        if cells > GLOBAL_ORACLE_MAX_CELLS {
            return Err(Error::TooLarge(format!("{cells} combinations exceed the global oracle limit")));
        }
        let (q0, _) = crate::enumerate::reference(d, cfg, &crate::enumerate::ReferenceMode::FullSplit, &EnumerationOptions::new())?;
        for eps in [0.0, 0.1, 0.3] {
            let rps = enumerate_rps(d, cfg, q0, eps, &EnumerationOptions::new())?;
            let theta = rps.theta;
            let mut got: Vec<_> = rps.entries.into_iter().map(|e| e.partition).collect();
            got.sort();
            let want: Vec<_> = brute_force_global(d, cfg, theta + skew, pool_cap(theta, cfg, None), &profiles)?
                .into_iter()
                .map(|x| x.0)
                .collect();
            suite.record(got == want, || format!("dataset {i} epsilon {eps}"));
        }
    }
    Ok(suite)
}

/// Permissible partitions of a profile number exactly 2^(entries of Σ).
pub fn counting_suite(shapes: &[Vec<usize>]) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("counting");
    for shape in shapes {
        let space = FeatureSpace::single_profile(shape.clone())?;
        let profile = Profile::full(shape.len());
        let cells: Vec<usize> = (0..space.size()).collect();
        if cells.len() > GLOBAL_ORACLE_MAX_CELLS {
            return Err(Error::TooLarge(format!("shape {shape:?} is too large for exhaustive counting")));
        }
        let mut count = 0u64;
        for p in set_partitions(&cells) {
            if check_profile_partition(&space, &p, profile)?.is_none() {
                count += 1;
            }
        }
        let entries: usize = shape.iter().map(|&l| l - 1).sum();
        suite.record(count == 1 << entries, || format!("shape {shape:?}: {count} permissible"));
    }
    Ok(suite)
}

/// Inclusion-exclusion pool count against the direct count, for every Σ.
pub fn pool_count_suite(shapes: &[Vec<usize>]) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("pool-count");
    for shape in shapes {
        let space = FeatureSpace::single_profile(shape.clone())?;
        let profile = Profile::full(shape.len());
        let entries: usize = shape.iter().map(|&l| l - 1).sum();
        for bits in 0..1u64 << entries {
            let s = PartitionMatrix::from_bits(shape, profile, bits);
            let direct = pools_from_sigma(&space, &s)?.len() as u64;
            suite.record(direct == count_pools_inclusion_exclusion(&s), || format!("shape {shape:?} sigma {s}"));
        }
    }
    Ok(suite)
}

/// Every visited node's bound B is at most the Q of every matrix in its
/// subproblem, within `rel_tol` relative.
pub fn bound_suite(datasets: &[(Dataset, LossConfig)], rel_tol: f64) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("bound-validity");
    for (i, (d, cfg)) in datasets.iter().enumerate() {
        for profile in d.realized_profiles() {
            let obj = ProfileObjective::new(d, cfg, profile)?;
            let shape = obj.shape().to_vec();
            let entries: usize = shape.iter().map(|&l| l - 1).sum();
            if entries > BOUND_SUITE_MAX_ENTRIES {
                return Err(Error::TooLarge(format!("profile {profile} is too large for the bound suite")));
            }
            let qs: Vec<f64> =
                (0..1u64 << entries).map(|b| obj.q(&PartitionMatrix::from_bits(&shape, profile, b))).collect::<Result<_>>()?;
            let mut visits: Vec<NodeVisit> = Vec::new();
            let mut observer = |v: &NodeVisit| visits.push(v.clone());
            enumerate_profile_with(
                profile,
                usize::MAX,
                d,
                f64::INFINITY,
                cfg,
                SearchOptions { origin: None, observer: Some(&mut observer) },
            )?;
            for v in &visits {
                let fixed_bits = v.sigma.to_bits();
                let mut mask = 0u64;
                let mut pos = 0;
                for row in v.fixed.rows() {
                    for &f in row {
                        if f {
                            mask |= 1 << pos;
                        }
                        pos += 1;
                    }
                }
                let best = (0..1u64 << entries)
                    .filter(|b| b & mask == fixed_bits & mask)
                    .map(|b| qs[b as usize])
                    .fold(f64::INFINITY, f64::min);
                let b = v.bounds.total();
                suite.record(b <= best + rel_tol * best.abs().max(1.0), || {
                    format!("dataset {i} profile {profile} sigma {} row {} j {}: B {b} > {best}", v.sigma, v.row, v.j)
                });
            }
        }
    }
    Ok(suite)
}

/// Built-in small spaces exercised by [`run_default_suites`].
pub fn default_datasets(opts: &VerifyOptions) -> Result<(Vec<(Dataset, LossConfig)>, Vec<(Dataset, LossConfig)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut single = Vec::new();
    for levels in [vec![3, 3], vec![2, 4], vec![2, 2, 3]] {
        let space = FeatureSpace::single_profile(levels)?;
        for k in 0..opts.datasets {
            let lambda = [0.02, 0.1, 0.3][k % 3];
            single.push((random_dataset(&space, 3, &mut rng)?, LossConfig::new(lambda)));
        }
    }
    let mut global = Vec::new();
    let space = FeatureSpace::new(vec![3, 3])?;
    for k in 0..opts.datasets {
        let lambda = [0.05, 0.1, 0.2][k % 3];
        global.push((random_dataset(&space, 3, &mut rng)?, LossConfig::new(lambda)));
    }
    Ok((single, global))
}

pub fn run_default_suites(opts: &VerifyOptions) -> Result<VerifyReport> {
    let (single, global) = default_datasets(opts)?;
    let small = vec![vec![2, 2], vec![3, 3], vec![2, 5], vec![2, 2, 2], vec![4, 2]];
    let mut shapes = Vec::new();
    for a in 1..=4 {
        for b in 1..=4 {
            shapes.push(vec![a, b]);
            for c in 1..=4 {
                shapes.push(vec![a, b, c]);
            }
        }
    }
    Ok(VerifyReport {
        suites: vec![
            profile_oracle_suite(&single, opts.threshold_skew)?,
            global_oracle_suite(&global, opts.threshold_skew)?,
            counting_suite(&small)?,
            pool_count_suite(&shapes)?,
            bound_suite(&single, 1e-9)?,
        ],
    })
}

/// Suites over a caller's dataset; fails with [`Error::TooLarge`] when the
/// data exceeds the oracle limits.
pub fn run_data_suites(d: &Dataset, cfg: &LossConfig, opts: &VerifyOptions) -> Result<VerifyReport> {
    let sets = vec![(d.clone(), cfg.clone())];
    let mut suites = vec![profile_oracle_suite(&sets, opts.threshold_skew)?];
    if !d.space().is_single_profile() && d.realized_profiles().len() > 1 {
        suites.push(global_oracle_suite(&sets, opts.threshold_skew)?);
    }
    Ok(VerifyReport { suites })
}
