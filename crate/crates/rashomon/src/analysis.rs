//! Posterior quantities restricted to a Rashomon set.

use std::collections::BTreeMap;

use crate::enumerate::RashomonSet;
use crate::error::{Error, Result};
use crate::hasse::{FeatureCombination, Profile};
use crate::loss::{csum, effects, Dataset, EffectsVector, LossConfig};

/// Fitted effects of every entry with its normalized weight.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectPosterior {
    pub effects: Vec<EffectsVector>,
    pub weights: Vec<f64>,
}

impl EffectPosterior {
    /// Weighted distribution of β_k over the entries, one atom per entry.
    pub fn distribution(&self, k: usize) -> Vec<(f64, f64)> {
        self.effects.iter().zip(&self.weights).map(|(e, &w)| (e.values[k], w)).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        weighted_combination(&self.effects.iter().map(|e| e.values.as_slice()).collect::<Vec<_>>(), &self.weights)
    }
}

pub fn effect_posterior(rps: &RashomonSet, d: &Dataset, cfg: &LossConfig) -> Result<EffectPosterior> {
    if rps.is_empty() {
        return Err(Error::InvalidParameter("empty Rashomon set".into()));
    }
    let effects = rps.entries.iter().map(|e| effects(&e.partition, d, cfg)).collect::<Result<_>>()?;
    Ok(EffectPosterior { effects, weights: rps.entries.iter().map(|e| e.weight).collect() })
}

/// Σ_i masses[i] · vectors[i], componentwise and compensated.
pub fn weighted_combination(vectors: &[&[f64]], masses: &[f64]) -> Vec<f64> {
    let len = vectors.first().map_or(0, |v| v.len());
    (0..len).map(|k| csum(vectors.iter().zip(masses).map(|(v, &m)| v[k] * m))).collect()
}

/// `E_{Π|RPS} β`: the weight-averaged effects vector. Combinations outside
/// the enumerated universe stay NaN.
pub fn conditional_mean_effects(rps: &RashomonSet, d: &Dataset, cfg: &LossConfig) -> Result<EffectsVector> {
    let post = effect_posterior(rps, d, cfg)?;
    Ok(EffectsVector { values: post.mean(), pool_coefficients: Vec::new() })
}

/// Uniform CDF approximation bound for an RPS of `rps_size` members out of
/// `total_size` permissible partitions at posterior threshold `theta`.
pub fn approximation_error_bound(rps_size: usize, total_size: usize, theta: f64) -> Result<f64> {
    if total_size == 0 || rps_size > total_size {
        return Err(Error::InvalidParameter(format!("RPS size {rps_size} out of range for {total_size} partitions")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("posterior threshold must lie in (0, 1), got {theta}")));
    }
    let raw = if theta > 1.0 / total_size as f64 {
        2.0 * (1.0 - rps_size as f64 * theta)
    } else {
        2.0 * (total_size - rps_size) as f64 * theta
    };
    Ok(raw.clamp(0.0, 1.0))
}

fn check_masses(atoms: &[(f64, f64)], what: &str) -> Result<()> {
    if atoms.iter().any(|&(v, m)| !v.is_finite() || !(m >= 0.0)) {
        return Err(Error::InvalidParameter(format!("{what} posterior has invalid atoms")));
    }
    let total = csum(atoms.iter().map(|a| a.1));
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{what} posterior masses sum to {total}, not 1")));
    }
    Ok(())
}

/// Exact sup-norm distance between the step CDFs of two discrete
/// distributions given as `(value, mass)` atoms.
pub fn empirical_sup_cdf_error(full: &[(f64, f64)], restricted: &[(f64, f64)]) -> Result<f64> {
    check_masses(full, "full")?;
    check_masses(restricted, "restricted")?;
    let mut events: Vec<(f64, f64)> = full.iter().copied().chain(restricted.iter().map(|&(v, m)| (v, -m))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = crate::loss::CompensatedSum::default();
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < events.len() {
        let v = events[i].0;
        while i < events.len() && events[i].0 == v {
            diff.add(events[i].1);
            i += 1;
        }
        sup = sup.max(diff.value().abs());
    }
    Ok(sup.min(1.0))
}

/// Weighted per-entry values of a scalar query.
pub type WeightedValues = Vec<(f64, f64)>;

/// Per-entry `ŷ(treated, x) − ŷ(control, x)`, zero whenever both combinations
/// share a pool. `x` omits the treatment coordinate.
pub fn treatment_contrast(
    rps: &RashomonSet,
    d: &Dataset,
    cfg: &LossConfig,
    x: &FeatureCombination,
    treatment: usize,
    treated_level: usize,
    control_level: usize,
) -> Result<WeightedValues> {
    let space = d.space();
    let m = space.num_features();
    if treatment >= m {
        return Err(Error::InvalidParameter(format!("treatment feature {treatment} out of range")));
    }
    if x.levels().len() + 1 != m {
        return Err(Error::DimensionMismatch { expected: m - 1, got: x.levels().len() });
    }
    let with = |level: usize| {
        let mut v = x.levels().to_vec();
        v.insert(treatment, level);
        FeatureCombination::new(v)
    };
    let a = space.index_of(&with(treated_level))?;
    let b = space.index_of(&with(control_level))?;
    let mut out = Vec::with_capacity(rps.len());
    for e in &rps.entries {
        let (pa, pb) = match (e.partition.pool_of(a), e.partition.pool_of(b)) {
            (Some(pa), Some(pb)) => (pa, pb),
            _ => return Err(Error::OutOfSpace(x.levels().to_vec())),
        };
        let value = if pa == pb {
            0.0
        } else {
            let eff = effects(&e.partition, d, cfg)?;
            eff.values[a] - eff.values[b]
        };
        out.push((value, e.weight));
    }
    Ok(out)
}

/// CATE(x) per entry for a binary treatment feature (level 1 vs level 0).
pub fn cate(rps: &RashomonSet, d: &Dataset, cfg: &LossConfig, x: &FeatureCombination, treatment: usize) -> Result<WeightedValues> {
    let space = d.space();
    if treatment >= space.num_features() {
        return Err(Error::InvalidParameter(format!("treatment feature {treatment} out of range")));
    }
    if space.is_single_profile() || space.levels()[treatment] != 2 {
        return Err(Error::InvalidParameter("treatment feature must be binary with a control level".into()));
    }
    treatment_contrast(rps, d, cfg, x, treatment, 1, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bin {
    LargeNegative,
    SmallNegative,
    Zero,
    SmallPositive,
    LargePositive,
}

impl Bin {
    pub const ALL: [Bin; 5] = [Bin::LargeNegative, Bin::SmallNegative, Bin::Zero, Bin::SmallPositive, Bin::LargePositive];

    pub fn label(self) -> &'static str {
        match self {
            Bin::LargeNegative => "large-negative",
            Bin::SmallNegative => "small-negative",
            Bin::Zero => "zero",
            Bin::SmallPositive => "small-positive",
            Bin::LargePositive => "large-positive",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BinOptions {
    /// Scale separating small from large; computed from the values if unset.
    pub sd_scale: Option<f64>,
    /// Use the weighted standard deviation when computing the scale.
    pub weighted_sd: bool,
    /// Values with |v| ≤ tolerance count as zero. Zero means exact zeros only.
    pub zero_tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinnedEffects {
    pub sd_scale: f64,
    /// Mass per bin in [`Bin::ALL`] order.
    pub masses: [f64; 5],
}

impl BinnedEffects {
    pub fn mass(&self, bin: Bin) -> f64 {
        self.masses[bin as usize]
    }
}

pub fn classify(value: f64, sd: f64, zero_tolerance: f64) -> Bin {
    if value.abs() <= zero_tolerance {
        Bin::Zero
    } else if value < -sd {
        Bin::LargeNegative
    } else if value < 0.0 {
        Bin::SmallNegative
    } else if value <= sd {
        Bin::SmallPositive
    } else {
        Bin::LargePositive
    }
}

/// Standard deviation of the values, optionally weighted (population form).
pub fn effect_sd(values: &WeightedValues, weighted: bool) -> f64 {
    let (w, total): (Vec<f64>, f64) = if weighted {
        let t = csum(values.iter().map(|v| v.1));
        (values.iter().map(|v| v.1).collect(), t)
    } else {
        (vec![1.0; values.len()], values.len() as f64)
    };
    let mean = csum(values.iter().zip(&w).map(|(v, w)| v.0 * w)) / total;
    let var = csum(values.iter().zip(&w).map(|(v, w)| w * (v.0 - mean).powi(2))) / total;
    var.sqrt()
}

/// Five-bin weighted histogram of effect values.
pub fn effect_binning(values: &WeightedValues, opts: BinOptions) -> Result<BinnedEffects> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("no values to bin".into()));
    }
    if values.iter().any(|v| !v.0.is_finite() || !(v.1 >= 0.0)) {
        return Err(Error::InvalidParameter("non-finite value or negative weight".into()));
    }
    let sd = match opts.sd_scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::InvalidParameter(format!("sd scale must be positive, got {s}"))),
        None => effect_sd(values, opts.weighted_sd),
    };
    if !(opts.zero_tolerance >= 0.0) {
        return Err(Error::InvalidParameter("zero tolerance must be >= 0".into()));
    }
    let mut sums: [crate::loss::CompensatedSum; 5] = Default::default();
    for &(v, w) in values {
        sums[classify(v, sd, opts.zero_tolerance) as usize].add(w);
    }
    Ok(BinnedEffects { sd_scale: sd, masses: sums.map(|s| s.value()) })
}

/// `e^{-(Q - Q_min)} − 1`, the posterior ratio relative to the best entry.
pub fn relative_ratio(q: f64, q_min: f64) -> f64 {
    (-(q - q_min)).exp_m1()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramCell {
    pub num_pools: usize,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub count: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitFrequency {
    pub profile: Profile,
    pub feature: usize,
    /// Edge between in-profile levels `level` and `level + 1` (1-based).
    pub level: usize,
    /// RPS weight of the entries that split this edge class.
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpsSummary {
    pub histogram: Vec<HistogramCell>,
    pub split_frequencies: Vec<SplitFrequency>,
    /// `(Q, |Π|)` in ascending Q order.
    pub curve: Vec<(f64, usize)>,
}

pub const DEFAULT_RATIO_BINS: usize = 10;

/// Histogram over (pool count, relative ratio) with `ratio_bins` equal bins
/// on [−1, 0], split frequencies per edge class and the (Q, |Π|) curve.
pub fn rps_summary(rps: &RashomonSet, ratio_bins: usize) -> Result<RpsSummary> {
    if ratio_bins == 0 {
        return Err(Error::InvalidParameter("at least one ratio bin is required".into()));
    }
    let Some(q_min) = rps.q_min() else {
        return Ok(RpsSummary { histogram: Vec::new(), split_frequencies: Vec::new(), curve: Vec::new() });
    };
    let nb = ratio_bins as f64;
    let mut cells: BTreeMap<(usize, usize), (usize, crate::loss::CompensatedSum)> = BTreeMap::new();
    for e in &rps.entries {
        let r = relative_ratio(e.q, q_min);
        let b = (((r + 1.0) * nb).floor() as usize).min(ratio_bins - 1);
        let cell = cells.entry((e.num_pools(), b)).or_default();
        cell.0 += 1;
        cell.1.add(e.weight);
    }
    let histogram = cells
        .into_iter()
        .map(|((num_pools, b), (count, w))| HistogramCell {
            num_pools,
            ratio_low: -1.0 + b as f64 / nb,
            ratio_high: -1.0 + (b + 1) as f64 / nb,
            count,
            weight: w.value(),
        })
        .collect();

    let mut split_frequencies = Vec::new();
    for (pi, &profile) in rps.profiles.iter().enumerate() {
        let active = profile.active_features();
        let Some(first) = rps.entries.first() else { break };
        for (r, row) in first.sigmas[pi].rows().iter().enumerate() {
            for j in 0..row.len() {
                let f = csum(rps.entries.iter().filter(|e| !e.sigmas[pi].get(r, j)).map(|e| e.weight));
                split_frequencies.push(SplitFrequency { profile, feature: active[r], level: j + 1, frequency: f });
            }
        }
    }
    let curve = rps.entries.iter().map(|e| (e.q, e.num_pools())).collect();
    Ok(RpsSummary { histogram, split_frequencies, curve })
}

/// Number of entries with `Q ≤ q0 (1 + ε)` for each ε.
pub fn size_vs_epsilon(rps: &RashomonSet, epsilons: &[f64]) -> Vec<(f64, usize)> {
    epsilons
        .iter()
        .map(|&eps| {
            let theta = rps.q0 * (1.0 + eps);
            (eps, rps.entries.iter().filter(|e| crate::loss::within_threshold(e.q, theta)).count())
        })
        .collect()
}
