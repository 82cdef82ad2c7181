//! Per-profile objective and the branch-and-bound lower bounds.

use crate::error::{Error, Result};
use crate::hasse::{check_shape, pool_labels, PartitionMatrix, Profile, ProfileLayout};
use crate::loss::{covariance_zeros, csum, fit_pool, Dataset, LossConfig, Penalty, PoolEstimate};

/// The σ entries held fixed at a search node. Same ragged shape as σ.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FixedIndexSet {
    fixed: Vec<Vec<bool>>,
}

impl FixedIndexSet {
    pub fn all(shape: &[usize]) -> Self {
        Self { fixed: shape.iter().map(|&l| vec![true; l.saturating_sub(1)]).collect() }
    }

    pub fn none(shape: &[usize]) -> Self {
        Self { fixed: shape.iter().map(|&l| vec![false; l.saturating_sub(1)]).collect() }
    }

    /// Everything except row `row` from position `j` on.
    pub fn node(shape: &[usize], row: usize, j: usize) -> Self {
        let mut out = Self::all(shape);
        for x in out.fixed[row].iter_mut().skip(j) {
            *x = false;
        }
        out
    }

    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(shape: &[usize], pairs: I) -> Result<Self> {
        let mut out = Self::none(shape);
        for (r, j) in pairs {
            match out.fixed.get_mut(r).and_then(|row| row.get_mut(j)) {
                Some(x) => *x = true,
                None => return Err(Error::MalformedSigma(format!("fixed index ({r}, {j}) out of range"))),
            }
        }
        Ok(out)
    }

    pub fn is_fixed(&self, row: usize, j: usize) -> bool {
        self.fixed[row][j]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.fixed
    }

    /// Σ_f: σ on fixed entries, 0 elsewhere.
    pub fn finest(&self, sigma: &PartitionMatrix) -> PartitionMatrix {
        self.fill_free(sigma, false)
    }

    /// σ on fixed entries, 1 elsewhere: the coarsest matrix sharing the fixed part.
    pub fn coarsest(&self, sigma: &PartitionMatrix) -> PartitionMatrix {
        self.fill_free(sigma, true)
    }

    fn fill_free(&self, sigma: &PartitionMatrix, value: bool) -> PartitionMatrix {
        let mut out = sigma.clone();
        for (r, row) in self.fixed.iter().enumerate() {
            for (j, &f) in row.iter().enumerate() {
                if !f {
                    out.set(r, j, value);
                }
            }
        }
        out
    }

    fn check(&self, sigma: &PartitionMatrix) -> Result<()> {
        let ok = self.fixed.len() == sigma.rows().len()
            && self.fixed.iter().zip(sigma.rows()).all(|(a, b)| a.len() == b.len());
        if ok {
            Ok(())
        } else {
            Err(Error::MalformedSigma("fixed index set does not match the matrix shape".into()))
        }
    }
}

/// The two lower bounds at a node: `b` (fixed part plus penalty) and `b_eq`
/// (the unavoidable loss of the unfixed part).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub fixed: f64,
    pub equivalent: f64,
}

impl Bounds {
    /// B = b + b_eq.
    pub fn total(&self) -> f64 {
        self.fixed + self.equivalent
    }
}

/// Loss, penalty and bounds restricted to one profile.
///
/// Losses are normalized by the full dataset size so per-profile values add
/// up to the global loss. The covariance penalty is reported in its
/// per-profile form `K_ρ² − Σ h²`.
pub struct ProfileObjective<'a> {
    layout: ProfileLayout,
    data: &'a Dataset,
    cfg: &'a LossConfig,
    n: f64,
}

impl<'a> ProfileObjective<'a> {
    pub fn new(data: &'a Dataset, cfg: &'a LossConfig, profile: Profile) -> Result<Self> {
        data.space().check_profile(profile)?;
        if data.n() == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        cfg.validate(data)?;
        let layout = ProfileLayout::new(data.space(), profile);
        Ok(Self { layout, data, cfg, n: data.n() as f64 })
    }

    pub fn layout(&self) -> &ProfileLayout {
        &self.layout
    }

    pub fn shape(&self) -> &[usize] {
        &self.layout.shape
    }

    pub fn profile(&self) -> Profile {
        self.layout.profile
    }

    pub fn check(&self, sigma: &PartitionMatrix) -> Result<()> {
        check_shape(&self.layout, sigma)
    }

    /// Pools of σ as lists of global cells, plus each local cell's pool.
    pub fn pools(&self, sigma: &PartitionMatrix) -> (Vec<Vec<usize>>, Vec<usize>) {
        let (labels, total) = pool_labels(&self.layout, sigma);
        let mut sets = vec![Vec::new(); total];
        for (c, &l) in labels.iter().enumerate() {
            sets[l].push(self.layout.cells[c]);
        }
        (sets, labels)
    }

    /// Per-local-cell weighted residual mass under the pools of σ.
    fn residuals(&self, sigma: &PartitionMatrix) -> Result<Vec<f64>> {
        let (sets, labels) = self.pools(sigma);
        let space = self.data.space();
        let mut fits = Vec::with_capacity(sets.len());
        for (i, set) in sets.iter().enumerate() {
            fits.push(fit_pool(set, self.data, self.cfg, i)?.1);
        }
        Ok(labels
            .iter()
            .enumerate()
            .map(|(c, &l)| {
                let cell = self.layout.cells[c];
                let s = self.data.cell(cell);
                if s.count == 0 {
                    return 0.0;
                }
                let yhat = match &fits[l] {
                    PoolEstimate::Mean(m) => *m,
                    PoolEstimate::Empty => return 0.0,
                    other => other.predict(&space.level_vec(cell)),
                };
                let w = self.cfg.weights.as_ref().map_or(1.0, |w| w[cell]);
                let dev = s.mean - yhat;
                w * (s.m2 + s.count as f64 * dev * dev)
            })
            .collect())
    }

    pub fn loss(&self, sigma: &PartitionMatrix) -> Result<f64> {
        let (sets, _) = self.pools(sigma);
        let mut parts = Vec::with_capacity(sets.len());
        for (i, set) in sets.iter().enumerate() {
            parts.push(fit_pool(set, self.data, self.cfg, i)?.0);
        }
        Ok(csum(parts) / self.n)
    }

    pub fn penalty(&self, sigma: &PartitionMatrix) -> f64 {
        match self.cfg.penalty {
            Penalty::PoolCount => sigma.pool_count() as f64,
            Penalty::CovarianceZeros => {
                let (sets, _) = self.pools(sigma);
                covariance_zeros(sets.iter().map(Vec::len))
            }
        }
    }

    pub fn q(&self, sigma: &PartitionMatrix) -> Result<f64> {
        Ok(self.loss(sigma)? + self.cfg.lambda * self.penalty(sigma))
    }

    /// Loss of the fully split matrix: the equivalent-points floor.
    pub fn floor(&self) -> Result<f64> {
        let zeros = PartitionMatrix::from_bits(&self.layout.shape, self.layout.profile, 0);
        self.loss(&zeros)
    }

    /// Local cells whose pool is the same for every matrix agreeing with σ on
    /// the fixed entries: in every row, the level's group is closed off by
    /// fixed splits (or the ends) with only fixed pooling entries inside.
    pub fn covered_cells(&self, sigma: &PartitionMatrix, fixed: &FixedIndexSet) -> Vec<bool> {
        let determined: Vec<Vec<bool>> = sigma
            .rows()
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let len = row.len() + 1;
                (0..len)
                    .map(|level| {
                        let mut ok = true;
                        let mut p = level;
                        while p > 0 {
                            let b = p - 1;
                            if !fixed.is_fixed(r, b) {
                                ok = false;
                                break;
                            }
                            if !row[b] {
                                break;
                            }
                            p -= 1;
                        }
                        let mut p = level;
                        while ok && p < row.len() {
                            if !fixed.is_fixed(r, p) {
                                ok = false;
                                break;
                            }
                            if !row[p] {
                                break;
                            }
                            p += 1;
                        }
                        ok
                    })
                    .collect()
            })
            .collect();
        (0..self.layout.cells.len())
            .map(|c| {
                self.layout
                    .local_digits(c)
                    .iter()
                    .enumerate()
                    .all(|(r, &d)| determined[r][d])
            })
            .collect()
    }

    pub fn bounds(&self, sigma: &PartitionMatrix, fixed: &FixedIndexSet) -> Result<Bounds> {
        self.check(sigma)?;
        fixed.check(sigma)?;
        let covered = self.covered_cells(sigma, fixed);
        let residuals = self.residuals(&fixed.finest(sigma))?;
        let inside = csum(residuals.iter().zip(&covered).filter(|(_, &c)| c).map(|(r, _)| *r)) / self.n;
        let outside = csum(residuals.iter().zip(&covered).filter(|(_, &c)| !c).map(|(r, _)| *r)) / self.n;
        let pen = match self.cfg.penalty {
            Penalty::PoolCount => {
                let (_, labels) = self.pools(sigma);
                let mut hit: Vec<usize> = labels.iter().zip(&covered).filter(|(_, &c)| c).map(|(l, _)| *l).collect();
                hit.sort_unstable();
                hit.dedup();
                hit.len() as f64
            }
            Penalty::CovarianceZeros => self.penalty(&fixed.coarsest(sigma)),
        };
        Ok(Bounds { fixed: inside + self.cfg.lambda * pen, equivalent: outside })
    }
}

/// b(σ, 𝓜): residuals of Π_f on the covered cells plus λ·H(Π, 𝓜).
pub fn fixed_bound(sigma: &PartitionMatrix, fixed: &FixedIndexSet, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    Ok(ProfileObjective::new(d, cfg, sigma.profile())?.bounds(sigma, fixed)?.fixed)
}

/// b_eq(σ, 𝓜): residuals of Π_f on the uncovered cells.
pub fn equivalent_bound(sigma: &PartitionMatrix, fixed: &FixedIndexSet, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    Ok(ProfileObjective::new(d, cfg, sigma.profile())?.bounds(sigma, fixed)?.equivalent)
}

/// B = b + b_eq.
pub fn combined_bound(sigma: &PartitionMatrix, fixed: &FixedIndexSet, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    Ok(ProfileObjective::new(d, cfg, sigma.profile())?.bounds(sigma, fixed)?.total())
}
