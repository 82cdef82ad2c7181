//! Pooling across hypercube-adjacent profiles.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::hasse::{check_global_over, has_cross_variant, FeatureSpace, Partition, Pool, Profile};
use crate::loss::{fit_partition, within_threshold, Dataset, LossConfig, Penalty};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intersection {
    Poolable,
    Pooled,
    Forbidden,
}

/// Σ∩ between the parts of a partition lying in two adjacent profiles.
/// Rows and columns are identified by the smallest cell of each part.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntersectionMatrix {
    pub lower: Profile,
    pub upper: Profile,
    pub row_keys: Vec<usize>,
    pub col_keys: Vec<usize>,
    pub states: Vec<Vec<Intersection>>,
}

impl IntersectionMatrix {
    pub fn state(&self, row_key: usize, col_key: usize) -> Option<Intersection> {
        let r = self.row_keys.iter().position(|&k| k == row_key)?;
        let c = self.col_keys.iter().position(|&k| k == col_key)?;
        Some(self.states[r][c])
    }

    pub fn poolable(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.states.iter().enumerate() {
            for (c, s) in row.iter().enumerate() {
                if *s == Intersection::Poolable {
                    out.push((self.row_keys[r], self.col_keys[c]));
                }
            }
        }
        out
    }
}

fn profile_parts(space: &FeatureSpace, pool: &Pool) -> BTreeMap<Profile, Vec<usize>> {
    let mut parts: BTreeMap<Profile, Vec<usize>> = BTreeMap::new();
    for &c in pool.members() {
        parts.entry(space.profile_of_index(c)).or_default().push(c);
    }
    parts
}

/// Builds Σ∩ for `rho_i < rho_j`. A pair is poolable when the parts contain a
/// variant pair and their pools cover disjoint sets of profiles; a row or
/// column already merged across the pair is forbidden elsewhere.
pub fn intersection_matrix(space: &FeatureSpace, p: &Partition, rho_i: Profile, rho_j: Profile) -> Result<IntersectionMatrix> {
    if !(rho_i.le(&rho_j) && rho_i.is_adjacent(&rho_j)) {
        return Err(Error::InvalidParameter(format!("profiles {rho_i} and {rho_j} are not adjacent")));
    }
    let parts: Vec<BTreeMap<Profile, Vec<usize>>> = p.pools().iter().map(|pool| profile_parts(space, pool)).collect();
    let rows: Vec<usize> = (0..parts.len()).filter(|&i| parts[i].contains_key(&rho_i)).collect();
    let cols: Vec<usize> = (0..parts.len()).filter(|&i| parts[i].contains_key(&rho_j)).collect();
    let row_merged: Vec<bool> = rows.iter().map(|&r| parts[r].contains_key(&rho_j)).collect();
    let col_merged: Vec<bool> = cols.iter().map(|&c| parts[c].contains_key(&rho_i)).collect();
    let states = rows
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            cols.iter()
                .enumerate()
                .map(|(ci, &c)| {
                    if r == c {
                        Intersection::Pooled
                    } else if row_merged[ri] || col_merged[ci] {
                        Intersection::Forbidden
                    } else if parts[r].keys().any(|k| parts[c].contains_key(k)) {
                        Intersection::Forbidden
                    } else if has_cross_variant(space, &parts[r][&rho_i], &parts[c][&rho_j], rho_i, rho_j) {
                        Intersection::Poolable
                    } else {
                        Intersection::Forbidden
                    }
                })
                .collect()
        })
        .collect();
    Ok(IntersectionMatrix {
        lower: rho_i,
        upper: rho_j,
        row_keys: rows.iter().map(|&r| parts[r][&rho_i][0]).collect(),
        col_keys: cols.iter().map(|&c| parts[c][&rho_j][0]).collect(),
        states,
    })
}

/// Shared inputs of the cross-profile search.
pub struct PoolingContext<'a> {
    pub data: &'a Dataset,
    pub cfg: &'a LossConfig,
    pub theta: f64,
    /// Profiles making up the universe.
    pub profiles: Vec<Profile>,
    /// Cap on the final pool count.
    pub h_max: usize,
}

impl PoolingContext<'_> {
    /// Lower bound on Q over every partition reachable by further merges:
    /// merging never lowers the loss and can never drop the pool count
    /// below the largest per-profile pool count.
    fn reachable_bound(&self, p: &Partition) -> Result<f64> {
        let n = self.data.n() as f64;
        let loss = fit_partition(p, self.data, self.cfg)?.0 / n;
        let space = self.data.space();
        let mut counts: BTreeMap<Profile, usize> = BTreeMap::new();
        for pool in p.pools() {
            for rho in profile_parts(space, pool).into_keys() {
                *counts.entry(rho).or_default() += 1;
            }
        }
        let floor = counts.values().copied().max().unwrap_or(1);
        Ok(loss + self.cfg.lambda * floor as f64)
    }

    fn q(&self, p: &Partition) -> Result<f64> {
        let n = self.data.n() as f64;
        Ok(fit_partition(p, self.data, self.cfg)?.0 / n + self.cfg.lambda * p.len() as f64)
    }
}

fn merge(p: &Partition, a: usize, b: usize) -> Partition {
    let ia = p.pool_of(a).expect("cell in partition");
    let ib = p.pool_of(b).expect("cell in partition");
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(p.len() - 1);
    let mut joined = Vec::new();
    for (i, pool) in p.pools().iter().enumerate() {
        if i == ia || i == ib {
            joined.extend_from_slice(pool.members());
        } else {
            sets.push(pool.members().to_vec());
        }
    }
    sets.push(joined);
    Partition::from_sets(sets)
}

/// Recursively applies every compatible subset of the poolable merges in
/// `inter` to `p`, adding each merged partition whose reachable bound stays
/// within the threshold to `acc`.
pub fn pool_adjacent_profiles(
    acc: &mut BTreeSet<Partition>,
    p: &Partition,
    inter: &IntersectionMatrix,
    ctx: &PoolingContext<'_>,
) -> Result<()> {
    let candidates = inter.poolable();
    recurse(acc, p, inter.lower, inter.upper, &candidates, 0, ctx)
}

fn recurse(
    acc: &mut BTreeSet<Partition>,
    p: &Partition,
    lower: Profile,
    upper: Profile,
    candidates: &[(usize, usize)],
    from: usize,
    ctx: &PoolingContext<'_>,
) -> Result<()> {
    if from >= candidates.len() {
        return Ok(());
    }
    let inter = intersection_matrix(ctx.data.space(), p, lower, upper)?;
    for (t, &(rk, ck)) in candidates.iter().enumerate().skip(from) {
        if inter.state(rk, ck) != Some(Intersection::Poolable) {
            continue;
        }
        let merged = merge(p, rk, ck);
        if !within_threshold(ctx.reachable_bound(&merged)?, ctx.theta) {
            continue;
        }
        acc.insert(merged.clone());
        recurse(acc, &merged, lower, upper, candidates, t + 1, ctx)?;
    }
    Ok(())
}

/// Hypercube edges among `profiles` in breadth-first order from the minimal
/// profiles, followed by any edge the traversal did not reach.
pub fn hypercube_edges(profiles: &[Profile]) -> Vec<(Profile, Profile)> {
    let set: BTreeSet<Profile> = profiles.iter().copied().collect();
    let minimal: Vec<Profile> = set.iter().copied().filter(|p| !set.iter().any(|q| q != p && q.le(p))).collect();
    let mut visited: BTreeSet<Profile> = minimal.iter().copied().collect();
    let mut queue: VecDeque<Profile> = minimal.into_iter().collect();
    let mut edges = Vec::new();
    let mut done = HashSet::new();
    while let Some(rho) = queue.pop_front() {
        for m in 0..rho.len() {
            if rho.is_active(m) {
                continue;
            }
            let up = Profile::from_mask(rho.mask() | 1 << m, rho.len());
            if set.contains(&up) && done.insert((rho, up)) {
                edges.push((rho, up));
                if visited.insert(up) {
                    queue.push_back(up);
                }
            }
        }
    }
    for &a in &set {
        for &b in &set {
            if a.le(&b) && a.is_adjacent(&b) && done.insert((a, b)) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Cross-profile pooling over a set of candidate global partitions (each a
/// union of per-profile partitions). Returns every globally permissible
/// partition reachable by merges with `Q ≤ theta` and at most `h_max` pools.
pub fn pool_profiles(candidates: &[Partition], ctx: &PoolingContext<'_>) -> Result<BTreeSet<Partition>> {
    if ctx.cfg.penalty != Penalty::PoolCount && ctx.profiles.len() > 1 {
        return Err(Error::InvalidParameter("cross-profile pooling requires the pool-count penalty".into()));
    }
    let space = ctx.data.space();
    let edges = hypercube_edges(&ctx.profiles);
    let mut out = BTreeSet::new();
    for cand in candidates {
        let mut working: BTreeSet<Partition> = BTreeSet::from([cand.clone()]);
        for &(lo, hi) in &edges {
            let snapshot: Vec<Partition> = working.iter().cloned().collect();
            for p in &snapshot {
                let inter = intersection_matrix(space, p, lo, hi)?;
                let mut acc = BTreeSet::new();
                pool_adjacent_profiles(&mut acc, p, &inter, ctx)?;
                working.extend(acc);
            }
        }
        for p in working {
            if p.len() <= ctx.h_max
                && within_threshold(ctx.q(&p)?, ctx.theta)
                && check_global_over(space, &p, &ctx.profiles)?.is_none()
            {
                out.insert(p);
            }
        }
    }
    Ok(out)
}

/// Index tuples, one index per ascending list, whose values sum to at most
/// `theta`, in lexicographic order.
pub fn select_feasible_combinations(sorted_lists: &[Vec<f64>], theta: f64) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_feasible_combination(sorted_lists, theta, |t| {
        out.push(t.to_vec());
        true
    });
    out
}

/// Streaming form of [`select_feasible_combinations`]; `visit` returns
/// `false` to stop early.
pub fn for_each_feasible_combination<F: FnMut(&[usize]) -> bool>(sorted_lists: &[Vec<f64>], theta: f64, mut visit: F) {
    let k = sorted_lists.len();
    if k == 0 || sorted_lists.iter().any(Vec::is_empty) {
        return;
    }
    let mut suffix_min = vec![0.0; k + 1];
    for i in (0..k).rev() {
        suffix_min[i] = suffix_min[i + 1] + sorted_lists[i][0];
    }
    fn go<F: FnMut(&[usize]) -> bool>(
        lists: &[Vec<f64>],
        suffix_min: &[f64],
        depth: usize,
        budget: f64,
        current: &mut Vec<usize>,
        visit: &mut F,
    ) -> bool {
        if depth == lists.len() {
            return visit(current);
        }
        for (i, &v) in lists[depth].iter().enumerate() {
            if v + suffix_min[depth + 1] > budget {
                break;
            }
            current.push(i);
            let go_on = go(lists, suffix_min, depth + 1, budget - v, current, visit);
            current.pop();
            if !go_on {
                return false;
            }
        }
        true
    }
    let mut current = Vec::with_capacity(k);
    go(sorted_lists, &suffix_min, 0, theta, &mut current, &mut visit);
}
