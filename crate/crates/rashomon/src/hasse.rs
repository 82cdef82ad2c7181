//! Feature spaces, profiles, partition matrices and permissibility rules.
//!
//! Combinations are stored as level vectors. In profile mode level 0 is the
//! control (inactive) level and levels `1..R_m` are active. In single-profile
//! mode every feature is active and levels run over `1..=R_m`, so the same
//! 1-based in-profile numbering is used in both modes.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Hard limit on the number of features; profiles are stored as bit masks.
pub const MAX_FEATURES: usize = 63;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureSpace {
    levels: Vec<usize>,
    single_profile: bool,
    strides: Vec<usize>,
    size: usize,
}

impl FeatureSpace {
    /// Profile mode: `levels[m]` counts the control level, so `R_m >= 2`.
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.iter().any(|&r| r < 2) {
            return Err(Error::InvalidSpace(
                "every feature needs a control level and at least one active level".into(),
            ));
        }
        Self::build(levels, false)
    }

    /// Single-profile mode: no control level, `R_m >= 1`.
    pub fn single_profile(levels: Vec<usize>) -> Result<Self> {
        if levels.iter().any(|&r| r < 1) {
            return Err(Error::InvalidSpace("every feature needs at least one level".into()));
        }
        Self::build(levels, true)
    }

    fn build(levels: Vec<usize>, single_profile: bool) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSpace("at least one feature is required".into()));
        }
        if levels.len() > MAX_FEATURES {
            return Err(Error::InvalidSpace(format!(
                "at most {MAX_FEATURES} features are supported"
            )));
        }
        let mut strides = vec![0; levels.len()];
        let mut size: usize = 1;
        for m in (0..levels.len()).rev() {
            strides[m] = size;
            size = size
                .checked_mul(levels[m])
                .ok_or_else(|| Error::InvalidSpace("universe size overflows".into()))?;
        }
        Ok(Self { levels, single_profile, strides, size })
    }

    pub fn num_features(&self) -> usize {
        self.levels.len()
    }

    /// Total level counts `R_m`.
    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn is_single_profile(&self) -> bool {
        self.single_profile
    }

    /// Number of in-profile levels `L_m` of feature `m`.
    pub fn in_profile_levels(&self, m: usize) -> usize {
        if self.single_profile {
            self.levels[m]
        } else {
            self.levels[m] - 1
        }
    }

    /// Smallest legal level value.
    pub fn min_level(&self) -> usize {
        usize::from(self.single_profile)
    }

    /// Universe size |K|.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stride(&self, m: usize) -> usize {
        self.strides[m]
    }

    pub fn contains(&self, k: &FeatureCombination) -> bool {
        let lo = self.min_level();
        k.0.len() == self.levels.len()
            && k.0.iter().zip(&self.levels).all(|(&v, &r)| v >= lo && v < r + lo)
    }

    pub fn index_of(&self, k: &FeatureCombination) -> Result<usize> {
        self.check_dim(k)?;
        if !self.contains(k) {
            return Err(Error::OutOfSpace(k.0.clone()));
        }
        let lo = self.min_level();
        Ok(k.0.iter().zip(&self.strides).map(|(&v, &s)| (v - lo) * s).sum())
    }

    pub fn combination(&self, index: usize) -> FeatureCombination {
        FeatureCombination(self.level_vec(index))
    }

    pub(crate) fn level_vec(&self, index: usize) -> Vec<usize> {
        let lo = self.min_level();
        self.strides
            .iter()
            .zip(&self.levels)
            .map(|(&s, &r)| (index / s) % r + lo)
            .collect()
    }

    pub(crate) fn level_at(&self, index: usize, m: usize) -> usize {
        (index / self.strides[m]) % self.levels[m] + self.min_level()
    }

    fn check_dim(&self, k: &FeatureCombination) -> Result<()> {
        if k.0.len() != self.levels.len() {
            return Err(Error::DimensionMismatch { expected: self.levels.len(), got: k.0.len() });
        }
        Ok(())
    }

    pub fn profile_of(&self, k: &FeatureCombination) -> Result<Profile> {
        if self.single_profile {
            return Err(Error::SingleProfileMode);
        }
        self.check_dim(k)?;
        Ok(Profile::from_levels(&k.0))
    }

    pub(crate) fn profile_of_index(&self, index: usize) -> Profile {
        if self.single_profile {
            return Profile::full(self.num_features());
        }
        let mut mask = 0u64;
        for m in 0..self.num_features() {
            if self.level_at(index, m) > 0 {
                mask |= 1 << m;
            }
        }
        Profile { mask, len: self.num_features() }
    }

    /// All profiles, ordered by mask. Single-profile mode has exactly one.
    pub fn profiles(&self) -> Vec<Profile> {
        let m = self.num_features();
        if self.single_profile {
            return vec![Profile::full(m)];
        }
        (0..(1u64 << m)).map(|mask| Profile { mask, len: m }).collect()
    }

    pub fn check_profile(&self, profile: Profile) -> Result<()> {
        if profile.len != self.num_features() {
            return Err(Error::DimensionMismatch { expected: self.num_features(), got: profile.len });
        }
        if self.single_profile && profile != Profile::full(profile.len) {
            return Err(Error::SingleProfileMode);
        }
        Ok(())
    }

    /// Dense indices of the profile's combinations, ascending.
    pub fn profile_cells(&self, profile: Profile) -> Vec<usize> {
        ProfileLayout::new(self, profile).cells
    }

    /// Level vector with `m` raised from control to level 1.
    pub(crate) fn activate(&self, index: usize, m: usize) -> usize {
        debug_assert!(!self.single_profile && self.level_at(index, m) == 0);
        index + self.strides[m]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureCombination(pub Vec<usize>);

impl FeatureCombination {
    pub fn new(levels: Vec<usize>) -> Self {
        Self(levels)
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for FeatureCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoOrdering {
    Less,
    Greater,
    Equal,
    Incomparable,
}

fn compare_slices(a: &[usize], b: &[usize]) -> PoOrdering {
    let le = a.iter().zip(b).all(|(x, y)| x <= y);
    let ge = a.iter().zip(b).all(|(x, y)| x >= y);
    match (le, ge) {
        (true, true) => PoOrdering::Equal,
        (true, false) => PoOrdering::Less,
        (false, true) => PoOrdering::Greater,
        (false, false) => PoOrdering::Incomparable,
    }
}

/// Componentwise partial order.
pub fn compare(k: &FeatureCombination, k2: &FeatureCombination) -> Result<PoOrdering> {
    if k.0.len() != k2.0.len() {
        return Err(Error::DimensionMismatch { expected: k.0.len(), got: k2.0.len() });
    }
    Ok(compare_slices(&k.0, &k2.0))
}

/// True when the two combinations differ by one level in exactly one feature.
pub fn is_variant(k: &FeatureCombination, k2: &FeatureCombination) -> Result<bool> {
    if k.0.len() != k2.0.len() {
        return Err(Error::DimensionMismatch { expected: k.0.len(), got: k2.0.len() });
    }
    Ok(l1_distance(&k.0, &k2.0) == 1)
}

fn l1_distance(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Profile {
    mask: u64,
    len: usize,
}

impl Profile {
    pub fn new(active: &[bool]) -> Self {
        let mask = active.iter().enumerate().filter(|(_, &a)| a).fold(0u64, |acc, (m, _)| acc | (1 << m));
        Self { mask, len: active.len() }
    }

    pub fn from_mask(mask: u64, len: usize) -> Self {
        debug_assert!(len <= MAX_FEATURES && mask >> len == 0);
        Self { mask, len }
    }

    fn from_levels(levels: &[usize]) -> Self {
        let mask = levels.iter().enumerate().filter(|(_, &v)| v > 0).fold(0u64, |acc, (m, _)| acc | (1 << m));
        Self { mask, len: levels.len() }
    }

    pub fn full(len: usize) -> Self {
        Self { mask: if len == 64 { u64::MAX } else { (1u64 << len) - 1 }, len }
    }

    pub fn control(len: usize) -> Self {
        Self { mask: 0, len }
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_active(&self, m: usize) -> bool {
        self.mask >> m & 1 == 1
    }

    pub fn active_features(&self) -> Vec<usize> {
        (0..self.len).filter(|&m| self.is_active(m)).collect()
    }

    pub fn num_active(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// Componentwise order on the hypercube.
    pub fn le(&self, other: &Profile) -> bool {
        self.mask & !other.mask == 0
    }

    /// Hypercube adjacency: exactly one feature differs.
    pub fn is_adjacent(&self, other: &Profile) -> bool {
        (self.mask ^ other.mask).count_ones() == 1
    }

    /// The feature that differs between two adjacent profiles.
    pub fn differing_feature(&self, other: &Profile) -> Option<usize> {
        self.is_adjacent(other).then(|| (self.mask ^ other.mask).trailing_zeros() as usize)
    }

    pub fn to_bits_string(&self) -> String {
        (0..self.len).map(|m| if self.is_active(m) { '1' } else { '0' }).collect()
    }

    pub fn parse(s: &str) -> Result<Self> {
        let active = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidParameter(format!("bad profile string {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(&active))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bits_string())
    }
}

/// Local coordinates of one profile: the active features, their in-profile
/// level counts and the profile's cells in ascending dense order.
#[derive(Clone, Debug)]
pub struct ProfileLayout {
    pub profile: Profile,
    pub active: Vec<usize>,
    pub shape: Vec<usize>,
    pub cells: Vec<usize>,
}

impl ProfileLayout {
    pub fn new(space: &FeatureSpace, profile: Profile) -> Self {
        let active = profile.active_features();
        let shape: Vec<usize> = active.iter().map(|&m| space.in_profile_levels(m)).collect();
        let total: usize = shape.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut digits = vec![0usize; shape.len()];
        for _ in 0..total {
            let index: usize = active
                .iter()
                .zip(&digits)
                .map(|(&m, &d)| {
                    let offset = if space.is_single_profile() { d } else { d + 1 };
                    offset * space.stride(m)
                })
                .sum();
            cells.push(index);
            for r in (0..digits.len()).rev() {
                digits[r] += 1;
                if digits[r] < shape[r] {
                    break;
                }
                digits[r] = 0;
            }
        }
        Self { profile, active, shape, cells }
    }

    /// 0-based in-profile level of each active feature for local cell `c`.
    pub fn local_digits(&self, c: usize) -> Vec<usize> {
        let mut out = vec![0; self.shape.len()];
        let mut rest = c;
        for r in (0..self.shape.len()).rev() {
            out[r] = rest % self.shape[r];
            rest /= self.shape[r];
        }
        out
    }

    pub fn local_strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for r in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[r] = strides[r + 1] * self.shape[r + 1];
        }
        strides
    }

    pub fn num_entries(&self) -> usize {
        self.shape.iter().map(|&l| l - 1).sum()
    }
}

/// Σ for one profile: one row per active feature, row `i` holding `L_i - 1`
/// entries. `true` pools adjacent levels, `false` splits them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PartitionMatrix {
    profile: Profile,
    rows: Vec<Vec<bool>>,
}

impl PartitionMatrix {
    pub fn new(space: &FeatureSpace, profile: Profile, rows: Vec<Vec<bool>>) -> Result<Self> {
        space.check_profile(profile)?;
        let active = profile.active_features();
        if rows.len() != active.len() {
            return Err(Error::MalformedSigma(format!(
                "expected {} rows, got {}",
                active.len(),
                rows.len()
            )));
        }
        for (row, &m) in rows.iter().zip(&active) {
            let want = space.in_profile_levels(m) - 1;
            if row.len() != want {
                return Err(Error::MalformedSigma(format!(
                    "row for feature {m} has {} entries, expected {want}",
                    row.len()
                )));
            }
        }
        Ok(Self { profile, rows })
    }

    pub fn filled(space: &FeatureSpace, profile: Profile, value: bool) -> Result<Self> {
        space.check_profile(profile)?;
        let rows = profile
            .active_features()
            .iter()
            .map(|&m| vec![value; space.in_profile_levels(m) - 1])
            .collect();
        Ok(Self { profile, rows })
    }

    pub fn ones(space: &FeatureSpace, profile: Profile) -> Result<Self> {
        Self::filled(space, profile, true)
    }

    pub fn zeros(space: &FeatureSpace, profile: Profile) -> Result<Self> {
        Self::filled(space, profile, false)
    }

    /// Row-major bit encoding, row 0 entry 0 in bit 0.
    pub fn from_bits(shape: &[usize], profile: Profile, bits: u64) -> Self {
        let mut pos = 0;
        let rows = shape
            .iter()
            .map(|&l| {
                (0..l.saturating_sub(1))
                    .map(|_| {
                        let b = bits >> pos & 1 == 1;
                        pos += 1;
                        b
                    })
                    .collect()
            })
            .collect();
        Self { profile, rows }
    }

    pub fn to_bits(&self) -> u64 {
        let mut bits = 0u64;
        let mut pos = 0;
        for row in &self.rows {
            for &b in row {
                if b {
                    bits |= 1 << pos;
                }
                pos += 1;
            }
        }
        bits
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn num_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, row: usize, j: usize) -> bool {
        self.rows[row][j]
    }

    pub fn set(&mut self, row: usize, j: usize, value: bool) {
        self.rows[row][j] = value;
    }

    pub fn with(&self, row: usize, j: usize, value: bool) -> Self {
        let mut out = self.clone();
        out.rows[row][j] = value;
        out
    }

    /// Row popcounts `z_i`.
    pub fn popcounts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.iter().filter(|&&b| b).count()).collect()
    }

    /// In-profile level counts `L_i` implied by the row lengths.
    pub fn shape(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.len() + 1).collect()
    }

    pub fn row_strings(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect()
    }

    pub fn from_row_strings(space: &FeatureSpace, profile: Profile, rows: &[String]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|s| {
                s.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(Error::MalformedSigma(format!("bad row string {s:?}"))),
                    })
                    .collect::<Result<Vec<bool>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, profile, parsed)
    }

    /// Per-row group index of each 0-based in-profile level.
    pub fn level_groups(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|row| {
                let mut g = 0;
                let mut out = Vec::with_capacity(row.len() + 1);
                out.push(0);
                for &b in row {
                    if !b {
                        g += 1;
                    }
                    out.push(g);
                }
                out
            })
            .collect()
    }

    /// Number of pools, `Π (L_i - z_i)`.
    pub fn pool_count(&self) -> usize {
        self.rows.iter().map(|r| r.iter().filter(|&&b| !b).count() + 1).product()
    }
}

impl fmt::Display for PartitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:[{}]", self.profile, self.row_strings().join(","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pool {
    members: Vec<usize>,
}

impl Pool {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn min(&self) -> Option<usize> {
        self.members.first().copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }
}

/// A set of pools in canonical order (sorted by minimum member).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    pools: Vec<Pool>,
}

impl Partition {
    pub fn new(pools: Vec<Pool>) -> Self {
        let mut pools: Vec<Pool> = pools.into_iter().filter(|p| !p.is_empty()).collect();
        pools.sort();
        Self { pools }
    }

    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        Self::new(sets.into_iter().map(Pool::new).collect())
    }

    pub fn pools(&self) -> &[Pool] {
        &self.pools
    }

    pub fn len(&self) -> usize {
        self.pools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pools.is_empty()
    }

    /// All members, ascending.
    pub fn cells(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.pools.iter().flat_map(|p| p.members.iter().copied()).collect();
        out.sort_unstable();
        out
    }

    /// Index of the pool holding `cell`.
    pub fn pool_of(&self, cell: usize) -> Option<usize> {
        self.pools.iter().position(|p| p.contains(cell))
    }

    /// Errors unless the pools are disjoint and cover exactly `universe`.
    pub fn check_cover(&self, universe: &[usize]) -> Result<()> {
        let cells = self.cells();
        if cells.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Coverage("pools overlap".into()));
        }
        let mut want = universe.to_vec();
        want.sort_unstable();
        if cells != want {
            return Err(Error::Coverage(format!(
                "partition covers {} combinations, universe has {}",
                cells.len(),
                want.len()
            )));
        }
        Ok(())
    }
}

/// Within-profile partition induced by σ: the Cartesian product of per-feature
/// level groups.
pub fn pools_from_sigma(space: &FeatureSpace, sigma: &PartitionMatrix) -> Result<Partition> {
    let layout = ProfileLayout::new(space, sigma.profile());
    check_shape(&layout, sigma)?;
    Ok(pools_from_layout(&layout, sigma))
}

pub(crate) fn check_shape(layout: &ProfileLayout, sigma: &PartitionMatrix) -> Result<()> {
    if sigma.profile() != layout.profile || sigma.shape() != layout.shape {
        return Err(Error::MalformedSigma(format!(
            "shape {:?} does not match profile {} with levels {:?}",
            sigma.shape(),
            layout.profile,
            layout.shape
        )));
    }
    Ok(())
}

/// Pool label of every local cell plus the pool count.
pub(crate) fn pool_labels(layout: &ProfileLayout, sigma: &PartitionMatrix) -> (Vec<usize>, usize) {
    let groups = sigma.level_groups();
    let counts: Vec<usize> = groups.iter().map(|g| g.last().map_or(1, |&x| x + 1)).collect();
    let total: usize = counts.iter().product();
    let mut labels = Vec::with_capacity(layout.cells.len());
    let mut digits = vec![0usize; layout.shape.len()];
    for _ in 0..layout.cells.len() {
        let mut label = 0;
        for r in 0..digits.len() {
            label = label * counts[r] + groups[r][digits[r]];
        }
        labels.push(label);
        for r in (0..digits.len()).rev() {
            digits[r] += 1;
            if digits[r] < layout.shape[r] {
                break;
            }
            digits[r] = 0;
        }
    }
    (labels, total)
}

pub(crate) fn pools_from_layout(layout: &ProfileLayout, sigma: &PartitionMatrix) -> Partition {
    let (labels, total) = pool_labels(layout, sigma);
    let mut sets = vec![Vec::new(); total];
    for (c, &l) in labels.iter().enumerate() {
        sets[l].push(layout.cells[c]);
    }
    Partition::from_sets(sets)
}

/// Pool count by inclusion-exclusion over row subsets:
/// `Σ_S (-1)^|S| Π_{i∉S} L_i Π_{i∈S} z_i`.
pub fn count_pools_inclusion_exclusion(sigma: &PartitionMatrix) -> u64 {
    let shape = sigma.shape();
    let z = sigma.popcounts();
    let m = shape.len();
    if m > 20 {
        return sigma.pool_count() as u64;
    }
    let mut total: i128 = 0;
    for subset in 0u32..(1 << m) {
        let mut term: i128 = 1;
        for i in 0..m {
            term *= if subset >> i & 1 == 1 { z[i] as i128 } else { shape[i] as i128 };
        }
        if subset.count_ones() % 2 == 1 {
            total -= term;
        } else {
            total += term;
        }
    }
    total as u64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeClass {
    pub feature: usize,
    /// 1-based in-profile level `r`; edges join levels `r` and `r + 1`.
    pub level: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Parallel-edge classes `E_{m,r}` of the profile's Hasse diagram.
pub fn edge_classes(space: &FeatureSpace, profile: Profile) -> Result<Vec<EdgeClass>> {
    space.check_profile(profile)?;
    let layout = ProfileLayout::new(space, profile);
    let strides = layout.local_strides();
    let mut out = Vec::new();
    for (r, &m) in layout.active.iter().enumerate() {
        for level in 0..layout.shape[r].saturating_sub(1) {
            let mut edges = Vec::new();
            for (c, &cell) in layout.cells.iter().enumerate() {
                if layout.local_digits(c)[r] == level {
                    edges.push((cell, layout.cells[c + strides[r]]));
                }
            }
            out.push(EdgeClass { feature: m, level: level + 1, edges });
        }
    }
    Ok(out)
}

/// Which rule a permissibility check tripped over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Coverage,
    StrongConvexity,
    ParallelSplits,
    CrossProfileVariants,
    ProfileConnectivity,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Coverage => "coverage",
            Rule::StrongConvexity => "strong-convexity",
            Rule::ParallelSplits => "parallel-splits",
            Rule::CrossProfileVariants => "cross-profile-variants",
            Rule::ProfileConnectivity => "profile-connectivity",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Min,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NotConvex { pool: usize },
    NoUniqueMin { pool: usize },
    NoUniqueMax { pool: usize },
    /// Two pools with incomparable extremes and no pool at their join/meet.
    ParallelSplits { first: usize, second: usize, side: Side },
    InducedProfile { profile: Profile, inner: Box<Violation> },
    CrossProfileLink { pool: usize },
    ProfileConnectivity { pool: usize },
}

impl Violation {
    pub fn rule(&self) -> Rule {
        match self {
            Violation::NotConvex { .. } | Violation::NoUniqueMin { .. } | Violation::NoUniqueMax { .. } => {
                Rule::StrongConvexity
            }
            Violation::ParallelSplits { .. } => Rule::ParallelSplits,
            Violation::InducedProfile { inner, .. } => inner.rule(),
            Violation::CrossProfileLink { .. } => Rule::CrossProfileVariants,
            Violation::ProfileConnectivity { .. } => Rule::ProfileConnectivity,
        }
    }
}

/// Rule-based check of a within-profile partition. `Ok(None)` means
/// permissible; coverage problems are errors.
pub fn check_profile_partition(
    space: &FeatureSpace,
    p: &Partition,
    profile: Profile,
) -> Result<Option<Violation>> {
    space.check_profile(profile)?;
    let layout = ProfileLayout::new(space, profile);
    p.check_cover(&layout.cells)?;

    let mut lows = Vec::with_capacity(p.len());
    let mut highs = Vec::with_capacity(p.len());
    for (i, pool) in p.pools().iter().enumerate() {
        let vecs: Vec<Vec<usize>> = pool.members().iter().map(|&c| space.level_vec(c)).collect();
        let m = space.num_features();
        let lo: Vec<usize> = (0..m).map(|f| vecs.iter().map(|v| v[f]).min().unwrap()).collect();
        let hi: Vec<usize> = (0..m).map(|f| vecs.iter().map(|v| v[f]).max().unwrap()).collect();
        if !vecs.contains(&lo) {
            return Ok(Some(Violation::NoUniqueMin { pool: i }));
        }
        if !vecs.contains(&hi) {
            return Ok(Some(Violation::NoUniqueMax { pool: i }));
        }
        let volume: usize = lo.iter().zip(&hi).map(|(a, b)| b - a + 1).product();
        if volume != pool.len() {
            return Ok(Some(Violation::NotConvex { pool: i }));
        }
        lows.push(lo);
        highs.push(hi);
    }

    let min_lookup: HashSet<&Vec<usize>> = lows.iter().collect();
    let max_lookup: HashSet<&Vec<usize>> = highs.iter().collect();
    for i in 0..p.len() {
        for j in (i + 1)..p.len() {
            if compare_slices(&lows[i], &lows[j]) == PoOrdering::Incomparable {
                let join: Vec<usize> = lows[i].iter().zip(&lows[j]).map(|(a, b)| *a.max(b)).collect();
                if !min_lookup.contains(&join) {
                    return Ok(Some(Violation::ParallelSplits { first: i, second: j, side: Side::Min }));
                }
            }
            if compare_slices(&highs[i], &highs[j]) == PoOrdering::Incomparable {
                let meet: Vec<usize> = highs[i].iter().zip(&highs[j]).map(|(a, b)| *a.min(b)).collect();
                if !max_lookup.contains(&meet) {
                    return Ok(Some(Violation::ParallelSplits { first: i, second: j, side: Side::Max }));
                }
            }
        }
    }
    Ok(None)
}

pub fn is_permissible_profile_partition(space: &FeatureSpace, p: &Partition, profile: Profile) -> Result<bool> {
    Ok(check_profile_partition(space, p, profile)?.is_none())
}

/// Reads σ off a partition (adjacent levels along the lowest line of each
/// feature) and returns it when it reproduces the partition exactly.
pub fn sigma_from_partition(space: &FeatureSpace, p: &Partition, profile: Profile) -> Result<Option<PartitionMatrix>> {
    space.check_profile(profile)?;
    let layout = ProfileLayout::new(space, profile);
    p.check_cover(&layout.cells)?;
    let strides = layout.local_strides();
    let rows = (0..layout.shape.len())
        .map(|r| {
            (0..layout.shape[r] - 1)
                .map(|j| {
                    let a = layout.cells[j * strides[r]];
                    let b = layout.cells[(j + 1) * strides[r]];
                    p.pool_of(a) == p.pool_of(b)
                })
                .collect()
        })
        .collect();
    let sigma = PartitionMatrix { profile, rows };
    Ok((pools_from_layout(&layout, &sigma) == *p).then_some(sigma))
}

/// Restriction of a global partition to one profile.
pub fn induced_partition(space: &FeatureSpace, p: &Partition, profile: Profile) -> Partition {
    let sets = p
        .pools()
        .iter()
        .map(|pool| {
            pool.members()
                .iter()
                .copied()
                .filter(|&c| space.profile_of_index(c) == profile)
                .collect()
        })
        .collect();
    Partition::from_sets(sets)
}

/// Global permissibility over the cells of `profiles`.
///
/// Case 2 requires that every pair of hypercube-adjacent profiles present in
/// a pool is joined by a variant pair inside the pool, and that every profile
/// part of a multi-profile pool is joined this way to at least one other part.
/// Case 3 requires the pool's profiles to be connected on the hypercube, with
/// a monotone chain inside the pool between any two comparable profiles.
pub fn check_global_over(space: &FeatureSpace, p: &Partition, profiles: &[Profile]) -> Result<Option<Violation>> {
    let mut universe = Vec::new();
    for &rho in profiles {
        space.check_profile(rho)?;
        universe.extend(space.profile_cells(rho));
    }
    p.check_cover(&universe)?;

    for &rho in profiles {
        let induced = induced_partition(space, p, rho);
        if let Some(v) = check_profile_partition(space, &induced, rho)? {
            return Ok(Some(Violation::InducedProfile { profile: rho, inner: Box::new(v) }));
        }
    }

    for (i, pool) in p.pools().iter().enumerate() {
        let mut parts: BTreeMap<Profile, Vec<usize>> = BTreeMap::new();
        for &c in pool.members() {
            parts.entry(space.profile_of_index(c)).or_default().push(c);
        }
        if parts.len() < 2 {
            continue;
        }
        let keys: Vec<Profile> = parts.keys().copied().collect();
        let mut linked = vec![false; keys.len()];
        for a in 0..keys.len() {
            for b in 0..keys.len() {
                let (lo, hi) = (keys[a], keys[b]);
                if !(lo.le(&hi) && lo.is_adjacent(&hi)) {
                    continue;
                }
                if has_cross_variant(space, &parts[&lo], &parts[&hi], lo, hi) {
                    linked[a] = true;
                    linked[b] = true;
                } else {
                    return Ok(Some(Violation::CrossProfileLink { pool: i }));
                }
            }
        }
        if linked.iter().any(|&l| !l) {
            return Ok(Some(Violation::CrossProfileLink { pool: i }));
        }
        if !profiles_connected(&keys) {
            return Ok(Some(Violation::ProfileConnectivity { pool: i }));
        }
    }
    Ok(None)
}

pub fn check_global(space: &FeatureSpace, p: &Partition) -> Result<Option<Violation>> {
    check_global_over(space, p, &space.profiles())
}

pub fn is_permissible_global(space: &FeatureSpace, p: &Partition) -> Result<bool> {
    Ok(check_global(space, p)?.is_none())
}

/// Whether some `k` in `lower` (profile `lo`) and `k + e_m` in `upper`
/// (profile `hi = lo + e_m`) are both present. Both slices must be sorted.
pub(crate) fn has_cross_variant(space: &FeatureSpace, lower: &[usize], upper: &[usize], lo: Profile, hi: Profile) -> bool {
    let Some(m) = lo.differing_feature(&hi) else { return false };
    debug_assert!(lo.le(&hi));
    lower.iter().any(|&k| upper.binary_search(&space.activate(k, m)).is_ok())
}

fn profiles_connected(keys: &[Profile]) -> bool {
    let set: BTreeSet<Profile> = keys.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([keys[0]]);
    seen.insert(keys[0]);
    while let Some(p) = queue.pop_front() {
        for &q in keys {
            if p.is_adjacent(&q) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    if seen.len() != set.len() {
        return false;
    }
    // Monotone chains between comparable profiles.
    for &a in keys {
        let mut reach = BTreeSet::from([a]);
        let mut queue = VecDeque::from([a]);
        while let Some(p) = queue.pop_front() {
            for &q in keys {
                if p.le(&q) && p.is_adjacent(&q) && reach.insert(q) {
                    queue.push_back(q);
                }
            }
        }
        if keys.iter().any(|&b| a.le(&b) && !reach.contains(&b)) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(levels: &[usize]) -> FeatureSpace {
        FeatureSpace::single_profile(levels.to_vec()).unwrap()
    }

    fn idx(space: &FeatureSpace, k: &[usize]) -> usize {
        space.index_of(&FeatureCombination::new(k.to_vec())).unwrap()
    }

    #[test]
    fn dense_index_roundtrip() {
        let s = FeatureSpace::new(vec![3, 2, 4]).unwrap();
        for i in 0..s.size() {
            assert_eq!(s.index_of(&s.combination(i)).unwrap(), i);
        }
        let t = sp(&[3, 2]);
        assert_eq!(t.combination(0).levels(), &[1, 1]);
        assert!(t.index_of(&FeatureCombination::new(vec![0, 1])).is_err());
    }

    #[test]
    fn overflow_detected() {
        assert!(FeatureSpace::new(vec![usize::MAX / 2, 4]).is_err());
    }

    #[test]
    fn profile_of_rejects_single_mode() {
        let t = sp(&[3, 3]);
        assert!(matches!(
            t.profile_of(&FeatureCombination::new(vec![1, 1])),
            Err(Error::SingleProfileMode)
        ));
    }

    #[test]
    fn control_profile_has_one_cell_and_empty_sigma() {
        let s = FeatureSpace::new(vec![3, 3]).unwrap();
        let c = Profile::control(2);
        assert_eq!(s.profile_cells(c), vec![0]);
        let sigma = PartitionMatrix::ones(&s, c).unwrap();
        assert_eq!(sigma.num_entries(), 0);
        assert_eq!(pools_from_sigma(&s, &sigma).unwrap().len(), 1);
    }

    #[test]
    fn malformed_rows_rejected() {
        let s = sp(&[3, 3]);
        assert!(PartitionMatrix::new(&s, Profile::full(2), vec![vec![true], vec![true, false]]).is_err());
    }

    #[test]
    fn edges_removed_by_sigma_give_pools() {
        let s = sp(&[3, 4]);
        let rho = Profile::full(2);
        let classes = edge_classes(&s, rho).unwrap();
        for bits in 0..(1u64 << 5) {
            let sigma = PartitionMatrix::from_bits(&[3, 4], rho, bits);
            let flat: Vec<bool> = sigma.rows().iter().flatten().copied().collect();
            let mut parent: Vec<usize> = (0..s.size()).collect();
            fn find(p: &mut Vec<usize>, x: usize) -> usize {
                if p[x] != x {
                    let r = find(p, p[x]);
                    p[x] = r;
                }
                p[x]
            }
            for (class, &keep) in classes.iter().zip(&flat) {
                if keep {
                    for &(a, b) in &class.edges {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra] = rb;
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for c in 0..s.size() {
                let r = find(&mut parent, c);
                groups.entry(r).or_default().push(c);
            }
            let comp = Partition::from_sets(groups.into_values().collect());
            assert_eq!(comp, pools_from_sigma(&s, &sigma).unwrap());
        }
    }

    #[test]
    fn cross_variant_detection() {
        let s = FeatureSpace::new(vec![2, 2]).unwrap();
        let a = idx(&s, &[1, 0]);
        let b = idx(&s, &[1, 1]);
        let lo = Profile::from_mask(0b01, 2);
        let hi = Profile::from_mask(0b11, 2);
        assert!(has_cross_variant(&s, &[a], &[b], lo, hi));
    }
}
