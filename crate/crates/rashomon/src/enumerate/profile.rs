//! Queue-driven search over one profile's partition matrices.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::objective::{Bounds, FixedIndexSet, ProfileObjective};
use crate::error::{Error, Result};
use crate::hasse::{PartitionMatrix, Profile};
use crate::loss::{within_threshold, Dataset, LossConfig};

/// Largest Σ size the exhaustive oracle accepts.
pub const BRUTE_FORCE_MAX_ENTRIES: usize = 24;

/// Visited-node cache. A key is σ with row `row` masked from position `j`
/// on; the mask position is part of the key, so differently masked copies
/// of the same σ stay distinct.
#[derive(Default, Debug)]
pub struct SearchCache {
    seen: HashSet<(u64, usize, usize)>,
    offsets: Vec<usize>,
    lens: Vec<usize>,
}

impl SearchCache {
    pub fn new(shape: &[usize]) -> Self {
        let lens: Vec<usize> = shape.iter().map(|&l| l.saturating_sub(1)).collect();
        let mut offsets = Vec::with_capacity(lens.len());
        let mut acc = 0;
        for &l in &lens {
            offsets.push(acc);
            acc += l;
        }
        Self { seen: HashSet::new(), offsets, lens }
    }

    fn key(&self, bits: u64, row: usize, j: usize) -> (u64, usize, usize) {
        let start = self.offsets[row] + j;
        let end = self.offsets[row] + self.lens[row];
        let mask: u64 = (start..end).fold(0, |m, p| m | (1 << p));
        (bits & !mask, row, j)
    }

    pub fn seen(&self, sigma: &PartitionMatrix, row: usize, j: usize) -> bool {
        self.seen.contains(&self.key(sigma.to_bits(), row, j))
    }

    pub fn insert(&mut self, sigma: &PartitionMatrix, row: usize, j: usize) {
        let k = self.key(sigma.to_bits(), row, j);
        self.seen.insert(k);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    fn first_unseen(&self, sigma: &PartitionMatrix, row: usize) -> Option<usize> {
        (0..self.lens[row]).find(|&j| !self.seen(sigma, row, j))
    }
}

/// One dequeued node that reached the bound test.
#[derive(Clone, Debug)]
pub struct NodeVisit {
    pub sigma: PartitionMatrix,
    pub row: usize,
    pub j: usize,
    pub fixed: FixedIndexSet,
    pub bounds: Bounds,
}

#[derive(Default)]
pub struct SearchOptions<'o> {
    /// Scan origin `(row, position)`, 0-based over the profile's rows.
    pub origin: Option<(usize, usize)>,
    pub observer: Option<&'o mut dyn FnMut(&NodeVisit)>,
}

/// All σ of `profile` with `Q ≤ theta` and at most `h_max` pools.
pub fn enumerate_profile(
    profile: Profile,
    h_max: usize,
    d: &Dataset,
    theta: f64,
    cfg: &LossConfig,
) -> Result<Vec<PartitionMatrix>> {
    enumerate_profile_with(profile, h_max, d, theta, cfg, SearchOptions::default())
}

pub fn enumerate_profile_with(
    profile: Profile,
    h_max: usize,
    d: &Dataset,
    theta: f64,
    cfg: &LossConfig,
    mut opts: SearchOptions<'_>,
) -> Result<Vec<PartitionMatrix>> {
    let obj = ProfileObjective::new(d, cfg, profile)?;
    let shape = obj.shape().to_vec();
    let lens: Vec<usize> = shape.iter().map(|&l| l - 1).collect();
    let entries: usize = lens.iter().sum();
    if entries > 64 {
        return Err(Error::TooLarge(format!("profile {profile} has {entries} matrix entries; at most 64 supported")));
    }

    let mut q_memo: HashMap<u64, f64> = HashMap::new();
    let mut q_of = |s: &PartitionMatrix| -> Result<f64> {
        let bits = s.to_bits();
        if let Some(&q) = q_memo.get(&bits) {
            return Ok(q);
        }
        let q = obj.q(s)?;
        q_memo.insert(bits, q);
        Ok(q)
    };

    let mut found: BTreeSet<u64> = BTreeSet::new();
    let ones = PartitionMatrix::from_bits(&shape, profile, u64::MAX);

    if entries == 0 {
        if ones.pool_count() <= h_max && within_threshold(q_of(&ones)?, theta) {
            found.insert(0);
        }
        return Ok(found.into_iter().map(|b| PartitionMatrix::from_bits(&shape, profile, b)).collect());
    }

    let origin = match opts.origin {
        Some((r, j)) => {
            if r >= lens.len() || j >= lens[r] {
                return Err(Error::InvalidParameter(format!("scan origin ({r}, {j}) out of range")));
            }
            (r, j)
        }
        None => (lens.iter().position(|&l| l > 0).unwrap(), 0),
    };

    let mut cache = SearchCache::new(&shape);
    let mut queue: VecDeque<(PartitionMatrix, usize, usize)> = VecDeque::new();
    queue.push_back((ones, origin.0, origin.1));

    while let Some((sigma, i, j)) = queue.pop_front() {
        if cache.seen(&sigma, i, j) {
            continue;
        }
        cache.insert(&sigma, i, j);

        let fixed = FixedIndexSet::node(&shape, i, j);
        // Fewest pools any matrix of this node can have.
        if fixed.coarsest(&sigma).pool_count() > h_max {
            continue;
        }

        let s1 = sigma.with(i, j, true);
        let s0 = sigma.with(i, j, false);

        for m in 0..lens.len() {
            if let Some(j1) = cache.first_unseen(&s1, m) {
                queue.push_back((s1.clone(), m, j1));
            }
            if let Some(j0) = cache.first_unseen(&s0, m) {
                queue.push_back((s0.clone(), m, j0));
            }
        }

        let bounds = obj.bounds(&sigma, &fixed)?;
        if let Some(obs) = opts.observer.as_mut() {
            obs(&NodeVisit { sigma: sigma.clone(), row: i, j, fixed: fixed.clone(), bounds });
        }
        if !within_threshold(bounds.total(), theta) {
            continue;
        }

        for s in [&s1, &s0] {
            if s.pool_count() <= h_max && within_threshold(q_of(s)?, theta) {
                found.insert(s.to_bits());
            }
        }

        if j + 1 < lens[i] {
            if !cache.seen(&s1, i, j + 1) {
                queue.push_back((s1, i, j + 1));
            }
            if !cache.seen(&s0, i, j + 1) {
                queue.push_back((s0, i, j + 1));
            }
        }
    }

    Ok(found.into_iter().map(|b| PartitionMatrix::from_bits(&shape, profile, b)).collect())
}

/// Exhaustive oracle: every σ of the profile filtered by threshold and cap.
pub fn brute_force_profile(
    profile: Profile,
    h_max: usize,
    d: &Dataset,
    theta: f64,
    cfg: &LossConfig,
) -> Result<Vec<PartitionMatrix>> {
    let obj = ProfileObjective::new(d, cfg, profile)?;
    let shape = obj.shape().to_vec();
    let entries: usize = shape.iter().map(|&l| l - 1).sum();
    if entries > BRUTE_FORCE_MAX_ENTRIES {
        return Err(Error::TooLarge(format!(
            "{entries} matrix entries exceed the oracle limit of {BRUTE_FORCE_MAX_ENTRIES}"
        )));
    }
    let mut out = Vec::new();
    for bits in 0..(1u64 << entries) {
        let s = PartitionMatrix::from_bits(&shape, profile, bits);
        if s.pool_count() <= h_max && within_threshold(obj.q(&s)?, theta) {
            out.push(s);
        }
    }
    Ok(out)
}
