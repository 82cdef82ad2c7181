//! Data aggregation, pool fits, the penalized objective Q and thresholds.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hasse::{FeatureCombination, FeatureSpace, Partition, Pool, Profile};

/// Absolute slack on threshold comparisons.
pub const THRESHOLD_TOL: f64 = 1e-12;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub(crate) fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Per-combination sufficient statistics: count, mean and the sum of squared
/// deviations from the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl CellStats {
    pub fn push(&mut self, y: f64) {
        self.count += 1;
        let delta = y - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn merge(&self, other: &CellStats) -> CellStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        CellStats {
            count: n,
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
        }
    }

    pub fn from_values(values: &[f64]) -> CellStats {
        let mut s = CellStats::default();
        for &y in values {
            s.push(y);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    space: FeatureSpace,
    cells: Vec<CellStats>,
    n: u64,
}

impl Dataset {
    pub fn new(space: FeatureSpace) -> Self {
        let cells = vec![CellStats::default(); space.size()];
        Self { space, cells, n: 0 }
    }

    pub fn from_observations<I>(space: FeatureSpace, obs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FeatureCombination, f64)>,
    {
        let mut d = Self::new(space);
        for (k, y) in obs {
            d.push(&k, y)?;
        }
        Ok(d)
    }

    pub fn from_indexed<I>(space: FeatureSpace, obs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut d = Self::new(space);
        for (i, y) in obs {
            d.push_index(i, y)?;
        }
        Ok(d)
    }

    pub fn from_cells(space: FeatureSpace, cells: Vec<CellStats>) -> Result<Self> {
        if cells.len() != space.size() {
            return Err(Error::Data(format!(
                "expected statistics for {} combinations, got {}",
                space.size(),
                cells.len()
            )));
        }
        if cells.iter().any(|c| !c.mean.is_finite() || !c.m2.is_finite() || c.m2 < 0.0) {
            return Err(Error::Data("non-finite or negative cell statistics".into()));
        }
        let n = cells.iter().map(|c| c.count).sum();
        Ok(Self { space, cells, n })
    }

    pub fn push(&mut self, k: &FeatureCombination, y: f64) -> Result<()> {
        let i = self.space.index_of(k)?;
        self.push_index(i, y)
    }

    pub fn push_index(&mut self, i: usize, y: f64) -> Result<()> {
        if i >= self.cells.len() {
            return Err(Error::OutOfSpace(vec![i]));
        }
        if !y.is_finite() {
            return Err(Error::Data(format!("non-finite outcome {y}")));
        }
        self.cells[i].push(y);
        self.n += 1;
        Ok(())
    }

    pub fn merge(&self, other: &Dataset) -> Result<Dataset> {
        if self.space != other.space {
            return Err(Error::Data("datasets over different feature spaces".into()));
        }
        let cells = self.cells.iter().zip(&other.cells).map(|(a, b)| a.merge(b)).collect();
        Ok(Self { space: self.space.clone(), cells, n: self.n + other.n })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn cells(&self) -> &[CellStats] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &CellStats {
        &self.cells[i]
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Profiles with at least one observation, ordered by mask.
    pub fn realized_profiles(&self) -> Vec<Profile> {
        let mut out: Vec<Profile> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.count > 0)
            .map(|(i, _)| self.space.profile_of_index(i))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeModel {
    /// One mean per pool.
    Constant,
    /// Least-squares fit of y on (1, k) within each pool.
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// |Π|.
    PoolCount,
    /// K² − Σ h², the zero count of a block-diagonal covariance.
    CovarianceZeros,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmptyPoolPolicy {
    Strict,
    Lenient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub outcome: OutcomeModel,
    /// Per-combination weights indexed densely; `None` means unit weights.
    pub weights: Option<Vec<f64>>,
    pub penalty: Penalty,
    pub empty_pools: EmptyPoolPolicy,
}

impl LossConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            outcome: OutcomeModel::Constant,
            weights: None,
            penalty: Penalty::PoolCount,
            empty_pools: EmptyPoolPolicy::Strict,
        }
    }

    pub fn linear(mut self) -> Self {
        self.outcome = OutcomeModel::Linear;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn lenient(mut self) -> Self {
        self.empty_pools = EmptyPoolPolicy::Lenient;
        self
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if let Some(w) = &self.weights {
            if w.len() != d.space().size() {
                let missing = (w.len()..d.space().size()).find(|&i| d.cell(i).count > 0);
                return Err(Error::MissingWeight(missing.unwrap_or(w.len())));
            }
            if let Some(i) = w.iter().position(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("weight for combination {i} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub rank_deficient: bool,
}

impl LinearFit {
    pub fn predict(&self, x: &[usize]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, &v)| b * v as f64).sum::<f64>()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept).chain(self.slopes.iter().copied()).collect()
    }
}

/// Fitted outcome function of one pool.
#[derive(Clone, Debug, PartialEq)]
pub enum PoolEstimate {
    Mean(f64),
    Linear(LinearFit),
    /// No observations (lenient policy only).
    Empty,
}

impl PoolEstimate {
    pub fn predict(&self, x: &[usize]) -> f64 {
        match self {
            PoolEstimate::Mean(m) => *m,
            PoolEstimate::Linear(f) => f.predict(x),
            PoolEstimate::Empty => f64::NAN,
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            PoolEstimate::Mean(m) => vec![*m],
            PoolEstimate::Linear(f) => f.coefficients(),
            PoolEstimate::Empty => Vec::new(),
        }
    }
}

/// Fits one pool; returns the unnormalized weighted squared error and the fit.
pub(crate) fn fit_pool(
    cells: &[usize],
    d: &Dataset,
    cfg: &LossConfig,
    pool: usize,
) -> Result<(f64, PoolEstimate)> {
    let count: u64 = cells.iter().map(|&c| d.cell(c).count).sum();
    if count == 0 {
        return match cfg.empty_pools {
            EmptyPoolPolicy::Strict => Err(Error::EmptyPool { pool }),
            EmptyPoolPolicy::Lenient => Ok((0.0, PoolEstimate::Empty)),
        };
    }
    let mut w: Vec<f64> = cells.iter().map(|&c| cfg.weight(c) * d.cell(c).count as f64).collect();
    let total = csum(w.iter().copied());
    let zero_weight = total <= 0.0;
    if zero_weight {
        // Residuals carry no weight; the estimate falls back to unit weights.
        w = cells.iter().map(|&c| d.cell(c).count as f64).collect();
    }
    let estimate = match cfg.outcome {
        OutcomeModel::Constant => PoolEstimate::Mean(weighted_mean(cells, &w, d)),
        OutcomeModel::Linear => PoolEstimate::Linear(linear_fit(cells, &w, d)),
    };
    if zero_weight {
        return Ok((0.0, estimate));
    }
    let space = d.space();
    let sse = csum(cells.iter().map(|&c| {
        let s = d.cell(c);
        if s.count == 0 {
            return 0.0;
        }
        let yhat = match &estimate {
            PoolEstimate::Mean(m) => *m,
            other => other.predict(&space.level_vec(c)),
        };
        let dev = s.mean - yhat;
        cfg.weight(c) * (s.m2 + s.count as f64 * dev * dev)
    }));
    Ok((sse.max(0.0), estimate))
}

fn weighted_mean(cells: &[usize], w: &[f64], d: &Dataset) -> f64 {
    let total = csum(w.iter().copied());
    csum(cells.iter().zip(w).map(|(&c, &wi)| wi * d.cell(c).mean)) / total
}

/// Weighted least squares on cell means with the design centred at the
/// weighted centroid; the slope vector is the minimum-norm solution.
fn linear_fit(cells: &[usize], w: &[f64], d: &Dataset) -> LinearFit {
    let space = d.space();
    let m = space.num_features();
    let pts: Vec<(Vec<f64>, f64, f64)> = cells
        .iter()
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&c, &wi)| (space.level_vec(c).into_iter().map(|v| v as f64).collect(), d.cell(c).mean, wi))
        .collect();
    let total = csum(pts.iter().map(|p| p.2));
    let xbar: Vec<f64> = (0..m).map(|f| csum(pts.iter().map(|p| p.2 * p.0[f])) / total).collect();
    let ybar = csum(pts.iter().map(|p| p.2 * p.1)) / total;
    let a = DMatrix::from_fn(pts.len(), m, |r, f| pts[r].2.sqrt() * (pts[r].0[f] - xbar[f]));
    let b = DVector::from_fn(pts.len(), |r, _| pts[r].2.sqrt() * (pts[r].1 - ybar));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = 1e-10 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let slopes: Vec<f64> = match svd.solve(&b, eps) {
        Ok(x) => x.iter().copied().collect(),
        Err(_) => vec![0.0; m],
    };
    let intercept = ybar - slopes.iter().zip(&xbar).map(|(s, x)| s * x).sum::<f64>();
    LinearFit { intercept, slopes, rank_deficient: rank < m }
}

/// Fits every pool of `p`; returns the total unnormalized error and the fits.
pub fn fit_partition(p: &Partition, d: &Dataset, cfg: &LossConfig) -> Result<(f64, Vec<PoolEstimate>)> {
    let mut total = CompensatedSum::default();
    let mut fits = Vec::with_capacity(p.len());
    for (i, pool) in p.pools().iter().enumerate() {
        let (sse, est) = fit_pool(pool.members(), d, cfg, i)?;
        total.add(sse);
        fits.push(est);
    }
    Ok((total.value(), fits))
}

fn check_n(d: &Dataset) -> Result<f64> {
    if d.n() == 0 {
        return Err(Error::Data("dataset has no observations".into()));
    }
    Ok(d.n() as f64)
}

/// Unweighted pool means in partition order.
pub fn pool_means(p: &Partition, d: &Dataset) -> Result<Vec<f64>> {
    let cfg = LossConfig::new(0.0);
    p.pools()
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            fit_pool(pool.members(), d, &cfg, i).map(|(_, e)| match e {
                PoolEstimate::Mean(m) => m,
                _ => f64::NAN,
            })
        })
        .collect()
}

pub fn mse_loss(p: &Partition, d: &Dataset) -> Result<f64> {
    loss(p, d, &LossConfig::new(0.0))
}

/// Weighted squared error. Pool centres are the weighted means, which keeps
/// splitting a pool from ever raising the loss.
pub fn weighted_mse_loss(p: &Partition, d: &Dataset, weights: &[f64]) -> Result<f64> {
    let cfg = LossConfig::new(0.0).with_weights(weights.to_vec());
    cfg.validate(d)?;
    loss(p, d, &cfg)
}

/// Loss term of Q under `cfg`.
pub fn loss(p: &Partition, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    let n = check_n(d)?;
    Ok(fit_partition(p, d, cfg)?.0 / n)
}

/// Penalty term (before multiplying by λ).
pub fn penalty(p: &Partition, cfg: &LossConfig) -> f64 {
    match cfg.penalty {
        Penalty::PoolCount => p.len() as f64,
        Penalty::CovarianceZeros => covariance_zeros(p.pools().iter().map(Pool::len)),
    }
}

pub(crate) fn covariance_zeros<I: IntoIterator<Item = usize>>(sizes: I) -> f64 {
    let (k, sq) = sizes.into_iter().fold((0u128, 0u128), |(k, sq), h| (k + h as u128, sq + (h as u128).pow(2)));
    (k * k - sq) as f64
}

pub fn q_value(p: &Partition, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    cfg.validate(d)?;
    Ok(loss(p, d, cfg)? + cfg.lambda * penalty(p, cfg))
}

/// θ_ε = q0 (1 + ε) in loss space.
pub fn rashomon_threshold(q0: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if !(q0 >= 0.0) || !q0.is_finite() {
        return Err(Error::InvalidParameter(format!("reference loss must be finite and >= 0, got {q0}")));
    }
    Ok(q0 * (1.0 + epsilon))
}

/// Closed membership test with absolute slack [`THRESHOLD_TOL`].
pub fn within_threshold(q: f64, theta: f64) -> bool {
    q <= theta + THRESHOLD_TOL
}

pub fn xi_value(q: f64, q0: f64) -> Result<f64> {
    if q0 == 0.0 {
        return Err(Error::InvalidParameter("degenerate reference with q0 = 0".into()));
    }
    Ok((q - q0) / q0)
}

pub fn xi(p: &Partition, q0: f64, d: &Dataset, cfg: &LossConfig) -> Result<f64> {
    xi_value(q_value(p, d, cfg)?, q0)
}

/// H = floor(q0 (1 + ε) / λ).
pub fn max_pools(q0: f64, epsilon: f64, lambda: f64) -> Result<usize> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("pool bound needs lambda > 0".into()));
    }
    let theta = rashomon_threshold(q0, epsilon)?;
    let h = (theta / lambda).floor();
    Ok(if h >= usize::MAX as f64 { usize::MAX } else { h as usize })
}

/// Least-squares fit of y on (1, k) over the pool's observations.
pub fn linear_pool_fit(pool: &Pool, d: &Dataset) -> Result<LinearFit> {
    let cfg = LossConfig::new(0.0).linear();
    match fit_pool(pool.members(), d, &cfg, 0)?.1 {
        PoolEstimate::Linear(f) => Ok(f),
        _ => unreachable!("linear model yields a linear fit"),
    }
}

/// Per-combination fitted outcomes for one partition.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectsVector {
    /// Fitted outcome per dense index; NaN outside the partition.
    pub values: Vec<f64>,
    /// Coefficients per pool in partition order: `[mean]` or
    /// `[intercept, slope_1, ..., slope_M]`.
    pub pool_coefficients: Vec<Vec<f64>>,
}

pub fn effects(p: &Partition, d: &Dataset, cfg: &LossConfig) -> Result<EffectsVector> {
    let (_, fits) = fit_partition(p, d, cfg)?;
    let space = d.space();
    let mut values = vec![f64::NAN; space.size()];
    for (pool, fit) in p.pools().iter().zip(&fits) {
        for &c in pool.members() {
            values[c] = match fit {
                PoolEstimate::Mean(m) => *m,
                other => other.predict(&space.level_vec(c)),
            };
        }
    }
    Ok(EffectsVector { values, pool_coefficients: fits.iter().map(PoolEstimate::coefficients).collect() })
}
