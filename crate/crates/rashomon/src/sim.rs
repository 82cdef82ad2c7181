//! Synthetic factorial data under a known pooled ground truth, and the
//! recovery experiments built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_rps, reference, EnumerationOptions, RashomonSet, ReferenceMode};
use crate::error::{Error, Result};
use crate::hasse::{pools_from_sigma, FeatureSpace, Partition, PartitionMatrix, Profile};
use crate::loss::{effects, mse_loss, pool_means, q_value, within_threshold, Dataset, LossConfig, PoolEstimate};

/// Data-generating process over a factorial space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub levels: Vec<usize>,
    #[serde(default)]
    pub single_profile: bool,
    /// Expected outcome per dense index.
    pub cell_means: Vec<f64>,
    /// Noise standard deviation per dense index.
    pub noise_sd: Vec<f64>,
    /// Draws per dense index.
    pub samples: Vec<usize>,
    /// Ground-truth partition as pools of dense indices, if known.
    #[serde(default)]
    pub truth: Option<Vec<Vec<usize>>>,
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

impl SimulationSpec {
    pub fn space(&self) -> Result<FeatureSpace> {
        if self.single_profile {
            FeatureSpace::single_profile(self.levels.clone())
        } else {
            FeatureSpace::new(self.levels.clone())
        }
    }

    /// Constant noise and sample count everywhere.
    pub fn uniform(space: &FeatureSpace, cell_means: Vec<f64>, noise_sd: f64, samples: usize, seed: u64) -> Self {
        let k = space.size();
        Self {
            levels: space.levels().to_vec(),
            single_profile: space.is_single_profile(),
            cell_means,
            noise_sd: vec![noise_sd; k],
            samples: vec![samples; k],
            truth: None,
            seed,
            replications: 1,
        }
    }

    pub fn with_truth(mut self, truth: &Partition) -> Self {
        self.truth = Some(truth.pools().iter().map(|p| p.members().to_vec()).collect());
        self
    }

    pub fn truth_partition(&self) -> Option<Partition> {
        self.truth.as_ref().map(|t| Partition::from_sets(t.clone()))
    }

    pub fn validate(&self) -> Result<FeatureSpace> {
        let space = self.space()?;
        let k = space.size();
        if self.cell_means.len() != k || self.noise_sd.len() != k || self.samples.len() != k {
            return Err(Error::InvalidParameter(format!("simulation vectors must have {k} entries")));
        }
        if self.cell_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("non-finite cell mean".into()));
        }
        if self.noise_sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidParameter("noise sd must be finite and >= 0".into()));
        }
        if self.samples.contains(&0) {
            return Err(Error::InvalidParameter("every combination needs at least one draw".into()));
        }
        if let Some(t) = self.truth_partition() {
            let all: Vec<usize> = (0..k).collect();
            t.check_cover(&all)?;
            if let Some(v) = crate::hasse::check_global(&space, &t)? {
                return Err(Error::InvalidParameter(format!("ground truth is not permissible: {}", v.rule())));
            }
        }
        Ok(space)
    }

    /// Best expected outcome and the dense indices attaining it.
    pub fn best_cells(&self) -> (f64, Vec<usize>) {
        let best = self.cell_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cells = (0..self.cell_means.len()).filter(|&c| self.cell_means[c] == best).collect();
        (best, cells)
    }
}

/// Generator for replication `replication`: the master seed with the
/// replication index as ChaCha stream.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// One dataset for replication 0.
pub fn generate(spec: &SimulationSpec) -> Result<Dataset> {
    generate_replication(spec, 0)
}

/// Draws every cell in dense order, `samples[k]` outcomes each.
pub fn generate_replication(spec: &SimulationSpec, replication: u64) -> Result<Dataset> {
    let space = spec.validate()?;
    let mut rng = replication_rng(spec.seed, replication);
    let mut d = Dataset::new(space);
    for c in 0..spec.cell_means.len() {
        for _ in 0..spec.samples[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            d.push_index(c, spec.cell_means[c] + spec.noise_sd[c] * z)?;
        }
    }
    Ok(d)
}

/// How the Rashomon threshold is set in each replication.
#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdRule {
    /// θ = q0 (1 + ε) for each ε of the grid.
    Epsilons(Vec<f64>),
    /// θ = c · MSE(reference partition).
    MseMultiple(f64),
}

#[derive(Clone, Debug)]
pub struct RecoveryProtocol {
    pub cfg: LossConfig,
    pub reference: ReferenceMode,
    pub threshold: ThresholdRule,
    pub options: EnumerationOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationOutcome {
    pub q0: f64,
    /// Per threshold: (ε, RPS size, best cells covered, truth present).
    pub per_threshold: Vec<(f64, usize, bool, bool)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    /// ε, averaged over replications for the MSE-multiple rule.
    pub epsilon: f64,
    pub best_coverage: f64,
    pub truth_recovery: f64,
    pub mean_rps_size: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryTable {
    pub rows: Vec<RecoveryRow>,
    pub replications: Vec<ReplicationOutcome>,
}

impl RecoveryTable {
    /// Tab-delimited rendering with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("epsilon\tbest_coverage\ttruth_recovery\tmean_rps_size\n");
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.epsilon, r.best_coverage, r.truth_recovery, r.mean_rps_size));
        }
        out
    }
}

/// Whether some entry's highest-mean pool lies inside `best`.
fn covers_best(entries: &[&crate::enumerate::RpsEntry], d: &Dataset, best: &[usize]) -> Result<bool> {
    for e in entries {
        let means = pool_means(&e.partition, d)?;
        let top = (0..means.len()).max_by(|&a, &b| means[a].total_cmp(&means[b]).then(b.cmp(&a)));
        if let Some(t) = top {
            if e.partition.pools()[t].members().iter().all(|c| best.binary_search(c).is_ok()) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn run_one(spec: &SimulationSpec, protocol: &RecoveryProtocol, replication: u64) -> Result<ReplicationOutcome> {
    let d = generate_replication(spec, replication)?;
    let (q0, ref_partition) = reference(&d, &protocol.cfg, &protocol.reference, &protocol.options)?;
    let thresholds: Vec<f64> = match &protocol.threshold {
        ThresholdRule::Epsilons(grid) => grid.clone(),
        ThresholdRule::MseMultiple(c) => {
            let theta = c * mse_loss(&ref_partition, &d)?;
            if !(q0 > 0.0) || theta < q0 {
                return Err(Error::InvalidParameter(format!("threshold {theta} lies below the reference loss {q0}")));
            }
            vec![theta / q0 - 1.0]
        }
    };
    let eps_max = thresholds.iter().copied().fold(0.0, f64::max);
    let rps = enumerate_rps(&d, &protocol.cfg, q0, eps_max, &protocol.options)?;
    let truth = spec.truth_partition();
    let (_, mut best) = spec.best_cells();
    best.sort_unstable();
    let mut per_threshold = Vec::with_capacity(thresholds.len());
    for &eps in &thresholds {
        let theta = q0 * (1.0 + eps);
        let inside: Vec<_> = rps.entries.iter().filter(|e| within_threshold(e.q, theta)).collect();
        let covered = covers_best(&inside, &d, &best)?;
        let present = truth.as_ref().is_some_and(|t| inside.iter().any(|e| &e.partition == t));
        per_threshold.push((eps, inside.len(), covered, present));
    }
    Ok(ReplicationOutcome { q0, per_threshold })
}

/// Runs `replications` independent replications in parallel; results are
/// independent of the thread count.
pub fn run_recovery_experiment(spec: &SimulationSpec, protocol: &RecoveryProtocol, replications: usize) -> Result<RecoveryTable> {
    if replications == 0 {
        return Err(Error::InvalidParameter("at least one replication is required".into()));
    }
    let outcomes: Vec<ReplicationOutcome> =
        (0..replications as u64).into_par_iter().map(|r| run_one(spec, protocol, r)).collect::<Result<_>>()?;
    let nt = outcomes[0].per_threshold.len();
    let nr = replications as f64;
    let rows = (0..nt)
        .map(|t| {
            let col = || outcomes.iter().map(move |o| o.per_threshold[t]);
            RecoveryRow {
                epsilon: match protocol.threshold {
                    ThresholdRule::Epsilons(ref grid) => grid[t],
                    ThresholdRule::MseMultiple(_) => col().map(|x| x.0).sum::<f64>() / nr,
                },
                best_coverage: col().filter(|x| x.2).count() as f64 / nr,
                truth_recovery: col().filter(|x| x.3).count() as f64 / nr,
                mean_rps_size: col().map(|x| x.1 as f64).sum::<f64>() / nr,
            }
        })
        .collect();
    Ok(RecoveryTable { rows, replications: outcomes })
}

/// Per-pool fitted coefficients of one RPS entry.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FittedPool {
    pub entry: usize,
    pub pool: usize,
    pub cells: Vec<usize>,
    /// `[intercept, slope_1, ..., slope_M]`.
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearExperiment {
    pub rps: RashomonSet,
    pub fits: Vec<FittedPool>,
    /// Position of the ground truth in the RPS, if present.
    pub truth_rank: Option<usize>,
}

/// Enumerates the RPS of one generated dataset under the per-pool linear
/// model and reports every entry's fitted lines. q0 is the reference Q.
pub fn run_linear_experiment(
    spec: &SimulationSpec,
    cfg: &LossConfig,
    reference_mode: &ReferenceMode,
    epsilon: f64,
    options: &EnumerationOptions,
) -> Result<LinearExperiment> {
    if cfg.outcome != crate::loss::OutcomeModel::Linear {
        return Err(Error::InvalidParameter("linear experiment needs the linear outcome model".into()));
    }
    let d = generate(spec)?;
    let (q0, _) = reference(&d, cfg, reference_mode, options)?;
    let rps = enumerate_rps(&d, cfg, q0, epsilon, options)?;
    let mut fits = Vec::new();
    for (i, e) in rps.entries.iter().enumerate() {
        let eff = effects(&e.partition, &d, cfg)?;
        for (j, (pool, coef)) in e.partition.pools().iter().zip(eff.pool_coefficients).enumerate() {
            fits.push(FittedPool { entry: i, pool: j, cells: pool.members().to_vec(), coefficients: coef });
        }
    }
    let truth = spec.truth_partition();
    let truth_rank = truth.and_then(|t| rps.entries.iter().position(|e| e.partition == t));
    Ok(LinearExperiment { rps, fits, truth_rank })
}

/// Cell means from per-pool coefficients `[c0]` or `[c0, slopes...]`
/// evaluated at each cell's level vector.
pub fn means_from_pools(space: &FeatureSpace, p: &Partition, coefficients: &[Vec<f64>]) -> Result<Vec<f64>> {
    if coefficients.len() != p.len() {
        return Err(Error::InvalidParameter(format!("{} pools but {} coefficient vectors", p.len(), coefficients.len())));
    }
    let mut means = vec![f64::NAN; space.size()];
    for (pool, coef) in p.pools().iter().zip(coefficients) {
        let est = match coef.len() {
            1 => PoolEstimate::Mean(coef[0]),
            n if n == space.num_features() + 1 => PoolEstimate::Linear(crate::loss::LinearFit {
                intercept: coef[0],
                slopes: coef[1..].to_vec(),
                rank_deficient: false,
            }),
            n => return Err(Error::InvalidParameter(format!("coefficient vector of length {n}"))),
        };
        for &c in pool.members() {
            means[c] = est.predict(&space.combination(c).0);
        }
    }
    Ok(means)
}

/// Two dosage features with four levels each; σ = [[1,1,0],[0,1,0]] and pool
/// means 0, 1.5, 3, 3, 6, 4.5.
pub mod dosage {
    use super::*;

    pub const LAMBDA: f64 = 1e-2;
    pub const MSE_MULTIPLE: f64 = 1.5;
    pub const POOL_MEANS: [f64; 6] = [0.0, 1.5, 3.0, 3.0, 6.0, 4.5];

    pub fn space() -> FeatureSpace {
        FeatureSpace::single_profile(vec![4, 4]).expect("valid space")
    }

    pub fn truth_sigma() -> PartitionMatrix {
        let rows = vec![vec![true, true, false], vec![false, true, false]];
        PartitionMatrix::new(&space(), Profile::full(2), rows).expect("valid sigma")
    }

    pub fn truth() -> Partition {
        pools_from_sigma(&space(), &truth_sigma()).expect("valid sigma")
    }

    /// Means per pool: b = 1 (A ≤ 3), b ∈ {2,3} (A ≤ 3), b = 4 (A ≤ 3),
    /// (4,1), (4, 2..3), (4,4).
    pub fn cell_means() -> Vec<f64> {
        let s = space();
        (0..s.size())
            .map(|c| {
                let k = s.combination(c);
                let (a, b) = (k.0[0], k.0[1]);
                match (a == 4, b) {
                    (false, 1) => POOL_MEANS[0],
                    (false, 2 | 3) => POOL_MEANS[1],
                    (false, _) => POOL_MEANS[2],
                    (true, 1) => POOL_MEANS[3],
                    (true, 2 | 3) => POOL_MEANS[4],
                    (true, _) => POOL_MEANS[5],
                }
            })
            .collect()
    }

    pub fn spec(samples: usize, seed: u64) -> SimulationSpec {
        SimulationSpec::uniform(&space(), cell_means(), 1.0, samples, seed).with_truth(&truth())
    }

    pub fn protocol() -> RecoveryProtocol {
        RecoveryProtocol {
            cfg: LossConfig::new(LAMBDA),
            reference: ReferenceMode::FullSplit,
            threshold: ThresholdRule::MseMultiple(MSE_MULTIPLE),
            options: EnumerationOptions::new(),
        }
    }
}

/// Four interventions with control plus three intensities; five profiles
/// carry a non-zero outcome and (1,0,1,0) is best.
pub mod intensity {
    use super::*;

    pub const SAMPLES: usize = 30;
    pub const MAX_RPS: usize = 200_000;
    /// (active features, mean, variance); every other profile is N(0, 1).
    pub const PROFILES: [([bool; 4], f64, f64); 5] = [
        ([false, false, false, true], 4.4, 1.0),
        ([false, true, false, false], 4.3, 1.0),
        ([false, true, false, true], 4.45, 1.0),
        ([true, false, true, false], 4.5, 1.5),
        ([true, true, true, true], 4.35, 1.0),
    ];

    pub fn space() -> FeatureSpace {
        FeatureSpace::new(vec![4; 4]).expect("valid space")
    }

    pub fn spec(seed: u64) -> SimulationSpec {
        let s = space();
        let mut means = vec![0.0; s.size()];
        let mut sd = vec![1.0; s.size()];
        for (active, mean, var) in PROFILES {
            for c in s.profile_cells(Profile::new(&active)) {
                means[c] = mean;
                sd[c] = var.sqrt();
            }
        }
        let truth = Partition::from_sets(s.profiles().into_iter().map(|p| s.profile_cells(p)).collect());
        let mut out = SimulationSpec::uniform(&s, means, 1.0, SAMPLES, seed).with_truth(&truth);
        out.noise_sd = sd;
        out
    }

    pub fn protocol(lambda: f64, epsilons: Vec<f64>) -> RecoveryProtocol {
        RecoveryProtocol {
            cfg: LossConfig::new(lambda),
            reference: ReferenceMode::Map,
            threshold: ThresholdRule::Epsilons(epsilons),
            options: EnumerationOptions { max_rps: Some(MAX_RPS), ..EnumerationOptions::within_profiles() },
        }
    }
}

/// Age × drug A × drug B with per-pool linear outcomes.
pub mod linear_dosage {
    use super::*;

    pub const LAMBDA: f64 = 4e-3;
    pub const EPSILON: f64 = 5e-4;
    pub const SAMPLES: usize = 10;
    /// `[intercept, age, A, B]` per pool in canonical pool order.
    pub const COEFFICIENTS: [[f64; 4]; 12] = [
        [0.0, -1.0, 0.0, 1.0],
        [1.5, -4.0, 0.0, 1.5],
        [0.0, -1.0, 0.0, 1.0],
        [4.5, -4.0, 0.0, 0.5],
        [4.0, -2.0, -1.0, 1.0],
        [1.0, 1.0, 1.0, -1.0],
        [-3.0, 2.0, -3.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
        [4.0, 2.0, -3.0, -1.0],
        [0.0, 0.0, 0.0, 0.0],
        [5.0, 2.0, -3.0, 0.0],
        [5.0, -1.0, 0.0, -1.0],
    ];

    pub fn space() -> FeatureSpace {
        FeatureSpace::single_profile(vec![2, 3, 5]).expect("valid space")
    }

    pub fn truth_sigma() -> PartitionMatrix {
        let rows = vec![vec![false], vec![false, false], vec![true, false, true, true]];
        PartitionMatrix::new(&space(), Profile::full(3), rows).expect("valid sigma")
    }

    pub fn truth() -> Partition {
        pools_from_sigma(&space(), &truth_sigma()).expect("valid sigma")
    }

    pub fn spec(noise_sd: f64, seed: u64) -> SimulationSpec {
        let s = space();
        let t = truth();
        let coef: Vec<Vec<f64>> = COEFFICIENTS.iter().map(|c| c.to_vec()).collect();
        let means = means_from_pools(&s, &t, &coef).expect("twelve pools");
        SimulationSpec::uniform(&s, means, noise_sd, SAMPLES, seed).with_truth(&t)
    }

    pub fn cfg() -> LossConfig {
        LossConfig::new(LAMBDA).linear()
    }
}

/// Q of the ground truth on a dataset, for calibration checks.
pub fn truth_q(spec: &SimulationSpec, d: &Dataset, cfg: &LossConfig) -> Result<Option<f64>> {
    spec.truth_partition().map(|t| q_value(&t, d, cfg)).transpose()
}
