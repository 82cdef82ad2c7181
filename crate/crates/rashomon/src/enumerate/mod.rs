//! Rashomon set enumeration: per-profile search, product pruning and
//! cross-profile pooling.

mod objective;
mod oracle;
mod pooling;
mod profile;

pub use objective::{combined_bound, equivalent_bound, fixed_bound, Bounds, FixedIndexSet, ProfileObjective};
pub use oracle::{brute_force_global, set_partitions, GLOBAL_ORACLE_MAX_CELLS};
pub use pooling::{
    for_each_feasible_combination, hypercube_edges, intersection_matrix, pool_adjacent_profiles, pool_profiles, select_feasible_combinations,
    Intersection, IntersectionMatrix, PoolingContext,
};
pub use profile::{
    brute_force_profile, enumerate_profile, enumerate_profile_with, NodeVisit, SearchCache, SearchOptions,
    BRUTE_FORCE_MAX_ENTRIES,
};

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hasse::{induced_partition, pools_from_sigma, Partition, PartitionMatrix, Profile};
use crate::loss::{q_value, rashomon_threshold, within_threshold, Dataset, LossConfig, Penalty, THRESHOLD_TOL};

const TUPLE_BLOCK: usize = 4096;

/// One member of the Rashomon set.
#[derive(Clone, Debug, PartialEq)]
pub struct RpsEntry {
    /// Σ per profile, in the order of [`RashomonSet::profiles`].
    pub sigmas: Vec<PartitionMatrix>,
    /// Cross-profile merges: each group lists `(profile, pool index)` pairs,
    /// the index referring to the canonical pool order of that profile's Σ.
    pub merges: Vec<Vec<(Profile, usize)>>,
    pub partition: Partition,
    pub q: f64,
    pub weight: f64,
}

impl RpsEntry {
    pub fn num_pools(&self) -> usize {
        self.partition.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RashomonSet {
    pub profiles: Vec<Profile>,
    pub q0: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub entries: Vec<RpsEntry>,
}

impl RashomonSet {
    /// Sorts entries by (Q, partition) and sets the self-normalized weights.
    pub fn new(profiles: Vec<Profile>, q0: f64, epsilon: f64, theta: f64, mut entries: Vec<RpsEntry>) -> Self {
        entries.sort_by(|a, b| a.q.total_cmp(&b.q).then_with(|| a.partition.cmp(&b.partition)));
        let weights = posterior_weights(&entries.iter().map(|e| e.q).collect::<Vec<_>>());
        for (e, w) in entries.iter_mut().zip(weights) {
            e.weight = w;
        }
        Self { profiles, q0, epsilon, theta, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn partitions(&self) -> Vec<&Partition> {
        self.entries.iter().map(|e| &e.partition).collect()
    }

    pub fn contains(&self, p: &Partition) -> bool {
        self.entries.iter().any(|e| &e.partition == p)
    }

    pub fn q_min(&self) -> Option<f64> {
        self.entries.first().map(|e| e.q)
    }
}

/// `e^{-(Q - Q_min)}` normalized to sum to one.
pub fn posterior_weights(qs: &[f64]) -> Vec<f64> {
    let Some(qmin) = qs.iter().copied().reduce(f64::min) else { return Vec::new() };
    let raw: Vec<f64> = qs.iter().map(|q| (-(q - qmin)).exp()).collect();
    let total = crate::loss::csum(raw.iter().copied());
    raw.into_iter().map(|r| r / total).collect()
}

#[derive(Clone, Debug, Default)]
pub struct EnumerationOptions {
    /// Explicit cap on the pool count; combined with the λ-derived bound.
    pub h_max: Option<usize>,
    pub cross_profile: bool,
    /// Profiles forming the universe; defaults to the realized profiles.
    pub profiles: Option<Vec<Profile>>,
    /// Abort with a partial result beyond this many entries.
    pub max_rps: Option<usize>,
}

impl EnumerationOptions {
    pub fn new() -> Self {
        Self { cross_profile: true, ..Self::default() }
    }

    pub fn within_profiles() -> Self {
        Self::default()
    }
}

pub(crate) fn universe_profiles(d: &Dataset, opts: &EnumerationOptions) -> Result<Vec<Profile>> {
    let mut profiles = match &opts.profiles {
        Some(p) => p.clone(),
        None => d.realized_profiles(),
    };
    profiles.sort();
    profiles.dedup();
    if profiles.is_empty() {
        return Err(Error::Data("no profiles to enumerate".into()));
    }
    for &rho in &profiles {
        d.space().check_profile(rho)?;
    }
    Ok(profiles)
}

fn check_observed(d: &Dataset, cfg: &LossConfig, profiles: &[Profile]) -> Result<()> {
    if cfg.empty_pools == crate::loss::EmptyPoolPolicy::Lenient {
        return Ok(());
    }
    for &rho in profiles {
        for c in d.space().profile_cells(rho) {
            if d.cell(c).count == 0 {
                return Err(Error::Data(format!(
                    "combination {} in profile {rho} has no observations",
                    d.space().combination(c)
                )));
            }
        }
    }
    Ok(())
}

/// Effective pool cap: the λ-derived bound (pool-count penalty only) and the
/// caller's cap, whichever is smaller.
pub fn pool_cap(theta: f64, cfg: &LossConfig, h_max: Option<usize>) -> usize {
    let from_lambda = if cfg.penalty == Penalty::PoolCount && cfg.lambda > 0.0 {
        let h = (theta / cfg.lambda).floor();
        if h >= usize::MAX as f64 {
            usize::MAX
        } else {
            h.max(0.0) as usize
        }
    } else {
        usize::MAX
    };
    from_lambda.min(h_max.unwrap_or(usize::MAX))
}

fn union_partition(d: &Dataset, sigmas: &[&PartitionMatrix]) -> Result<Partition> {
    let mut pools = Vec::new();
    for s in sigmas {
        pools.extend(pools_from_sigma(d.space(), s)?.pools().iter().cloned());
    }
    Ok(Partition::new(pools))
}

/// Cross-profile merge record of `p` relative to its per-profile matrices.
fn merge_record(d: &Dataset, p: &Partition, profiles: &[Profile], sigmas: &[PartitionMatrix]) -> Result<Vec<Vec<(Profile, usize)>>> {
    let space = d.space();
    let local: Vec<Partition> = sigmas.iter().map(|s| pools_from_sigma(space, s)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for pool in p.pools() {
        let mut group = Vec::new();
        for (rho, part) in profiles.iter().zip(&local) {
            if let Some(&c) = pool.members().iter().find(|&&c| space.profile_of_index(c) == *rho) {
                group.push((*rho, part.pool_of(c).expect("cell in profile partition")));
            }
        }
        if group.len() > 1 {
            out.push(group);
        }
    }
    Ok(out)
}

/// Per-profile Σ recovered from a global partition.
pub fn sigmas_of(d: &Dataset, p: &Partition, profiles: &[Profile]) -> Result<Vec<PartitionMatrix>> {
    profiles
        .iter()
        .map(|&rho| {
            let induced = induced_partition(d.space(), p, rho);
            crate::hasse::sigma_from_partition(d.space(), &induced, rho)?
                .ok_or_else(|| Error::InvalidParameter(format!("partition is not permissible on profile {rho}")))
        })
        .collect()
}

/// Enumerates the Rashomon set `{Π : Q(Π) ≤ q0 (1 + ε)}`.
pub fn enumerate_rps(d: &Dataset, cfg: &LossConfig, q0: f64, epsilon: f64, opts: &EnumerationOptions) -> Result<RashomonSet> {
    cfg.validate(d)?;
    if d.n() == 0 {
        return Err(Error::Data("dataset has no observations".into()));
    }
    let theta = rashomon_threshold(q0, epsilon)?;
    let profiles = universe_profiles(d, opts)?;
    check_observed(d, cfg, &profiles)?;
    let cross = opts.cross_profile && profiles.len() > 1;
    if cross && cfg.penalty != Penalty::PoolCount {
        return Err(Error::InvalidParameter("cross-profile pooling requires the pool-count penalty".into()));
    }
    let nprof = profiles.len();
    let h = pool_cap(theta, cfg, opts.h_max);
    let empty = || RashomonSet::new(profiles.clone(), q0, epsilon, theta, Vec::new());

    let objectives: Vec<ProfileObjective> =
        profiles.iter().map(|&rho| ProfileObjective::new(d, cfg, rho)).collect::<Result<_>>()?;
    let floors: Vec<f64> = objectives.iter().map(ProfileObjective::floor).collect::<Result<_>>()?;
    let floor_total: f64 = crate::loss::csum(floors.iter().copied());

    // Constant part of the covariance penalty that no single profile sees.
    let offset = match cfg.penalty {
        Penalty::PoolCount => 0.0,
        Penalty::CovarianceZeros => {
            let sizes: Vec<usize> = objectives.iter().map(|o| o.layout().cells.len()).collect();
            let k: u128 = sizes.iter().map(|&s| s as u128).sum();
            let sq: u128 = sizes.iter().map(|&s| (s as u128).pow(2)).sum();
            cfg.lambda * (k * k - sq) as f64
        }
    };
    let h_profile = if cross {
        h
    } else {
        match h.checked_sub(nprof - 1) {
            Some(x) => x,
            None => return Ok(empty()),
        }
    };

    let per_profile: Vec<Vec<(PartitionMatrix, f64)>> = objectives
        .par_iter()
        .enumerate()
        .map(|(i, obj)| -> Result<Vec<(PartitionMatrix, f64)>> {
            let budget = theta - offset - floor_total + floors[i];
            if budget + THRESHOLD_TOL < 0.0 {
                return Ok(Vec::new());
            }
            let found = enumerate_profile(obj.profile(), h_profile, d, budget, cfg)?;
            let mut scored = found
                .into_iter()
                .map(|s| {
                    let score = if cross {
                        obj.loss(&s)? + cfg.lambda * obj.penalty(&s) / nprof as f64
                    } else {
                        obj.q(&s)?
                    };
                    Ok((s, score))
                })
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            Ok(scored)
        })
        .collect::<Result<_>>()?;

    let lists: Vec<Vec<f64>> = per_profile.iter().map(|l| l.iter().map(|x| x.1).collect()).collect();
    let budget = if cross { theta } else { theta - offset };

    let build = |tuple: &Vec<usize>| -> Result<Vec<RpsEntry>> {
        let sigmas: Vec<PartitionMatrix> = tuple.iter().enumerate().map(|(i, &t)| per_profile[i][t].0.clone()).collect();
        let refs: Vec<&PartitionMatrix> = sigmas.iter().collect();
        let base = union_partition(d, &refs)?;
        let parts: Vec<Partition> = if cross {
            let ctx = PoolingContext { data: d, cfg, theta, profiles: profiles.clone(), h_max: h };
            pool_profiles(std::slice::from_ref(&base), &ctx)?.into_iter().collect()
        } else {
            vec![base]
        };
        let mut out = Vec::new();
        for p in parts {
            let q = q_value(&p, d, cfg)?;
            if p.len() <= h && within_threshold(q, theta) {
                let merges = merge_record(d, &p, &profiles, &sigmas)?;
                out.push(RpsEntry { sigmas: sigmas.clone(), merges, partition: p, q, weight: 0.0 });
            }
        }
        Ok(out)
    };

    let mut entries = Vec::new();
    let mut seen: BTreeSet<Partition> = BTreeSet::new();
    let mut failure: Option<Error> = None;
    let mut block: Vec<Vec<usize>> = Vec::with_capacity(TUPLE_BLOCK);
    let mut flush = |block: &mut Vec<Vec<usize>>, entries: &mut Vec<RpsEntry>| -> Result<()> {
        let built: Vec<Vec<RpsEntry>> = block.par_iter().map(build).collect::<Result<_>>()?;
        block.clear();
        for e in built.into_iter().flatten() {
            if seen.insert(e.partition.clone()) {
                entries.push(e);
            }
        }
        match opts.max_rps {
            Some(cap) if entries.len() > cap => Err(Error::CapExceeded {
                cap,
                partial: Box::new(RashomonSet::new(profiles.clone(), q0, epsilon, theta, std::mem::take(entries))),
            }),
            _ => Ok(()),
        }
    };
    for_each_feasible_combination(&lists, budget + 1e-9 * (1.0 + budget.abs()), |t| {
        block.push(t.to_vec());
        if block.len() == TUPLE_BLOCK {
            if let Err(e) = flush(&mut block, &mut entries) {
                failure = Some(e);
                return false;
            }
        }
        true
    });
    if let Some(e) = failure {
        return Err(e);
    }
    flush(&mut block, &mut entries)?;
    Ok(RashomonSet::new(profiles, q0, epsilon, theta, entries))
}

/// How the reference loss q0 is obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceMode {
    /// Every profile fully split.
    FullSplit,
    /// Bottom-up merging from the full split while Q keeps dropping.
    Greedy,
    /// The exact minimizer, found by enumerating below the greedy reference.
    Map,
    /// Caller-supplied Σ per profile.
    Explicit(Vec<PartitionMatrix>),
}

/// Reference partition (as Σ per profile, no cross-profile merges) and its Q.
pub fn reference(d: &Dataset, cfg: &LossConfig, mode: &ReferenceMode, opts: &EnumerationOptions) -> Result<(f64, Partition)> {
    cfg.validate(d)?;
    let profiles = universe_profiles(d, opts)?;
    check_observed(d, cfg, &profiles)?;
    let sigmas: Vec<PartitionMatrix> = match mode {
        ReferenceMode::FullSplit => {
            profiles.iter().map(|&rho| PartitionMatrix::zeros(d.space(), rho)).collect::<Result<_>>()?
        }
        ReferenceMode::Greedy => profiles.iter().map(|&rho| greedy_profile(d, cfg, rho)).collect::<Result<_>>()?,
        ReferenceMode::Map => {
            let (qg, pg) = reference(d, cfg, &ReferenceMode::Greedy, opts)?;
            let rps = enumerate_rps(d, cfg, qg, 0.0, &EnumerationOptions { max_rps: None, ..opts.clone() })?;
            return Ok(match rps.entries.into_iter().next() {
                Some(best) if best.q < qg => (best.q, best.partition),
                _ => (qg, pg),
            });
        }
        ReferenceMode::Explicit(list) => {
            let mut out = Vec::with_capacity(profiles.len());
            for &rho in &profiles {
                let s = list
                    .iter()
                    .find(|s| s.profile() == rho)
                    .ok_or_else(|| Error::InvalidParameter(format!("reference has no matrix for profile {rho}")))?;
                pools_from_sigma(d.space(), s)?;
                out.push(s.clone());
            }
            out
        }
    };
    let refs: Vec<&PartitionMatrix> = sigmas.iter().collect();
    let p = union_partition(d, &refs)?;
    Ok((q_value(&p, d, cfg)?, p))
}

fn greedy_profile(d: &Dataset, cfg: &LossConfig, rho: Profile) -> Result<PartitionMatrix> {
    let obj = ProfileObjective::new(d, cfg, rho)?;
    let mut current = PartitionMatrix::zeros(d.space(), rho)?;
    let mut q = obj.q(&current)?;
    loop {
        let mut best: Option<(f64, PartitionMatrix)> = None;
        for r in 0..current.rows().len() {
            for j in 0..current.rows()[r].len() {
                if current.get(r, j) {
                    continue;
                }
                let cand = current.with(r, j, true);
                let qc = obj.q(&cand)?;
                if qc < q && best.as_ref().is_none_or(|(bq, _)| qc < *bq) {
                    best = Some((qc, cand));
                }
            }
        }
        match best {
            Some((qc, s)) => {
                q = qc;
                current = s;
            }
            None => return Ok(current),
        }
    }
}
