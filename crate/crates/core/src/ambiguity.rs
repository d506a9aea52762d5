//! Ambiguity sets: grid distributions on an arc's support whose
//! expectations of piecewise-affine statistics lie in given intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpSolution, Relation};
use crate::model::{round_to_grid, CellRange, GridDistribution};

/// Slack when locating a point among statistic pieces.
const PIECE_SNAP: f64 = 1e-9;

/// Affine on `[lo, hi)`; the last piece of a statistic is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineStatistic {
    pieces: Vec<Piece>,
}

impl PiecewiseAffineStatistic {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::config("statistic needs at least one piece"));
        }
        let last = pieces.len() - 1;
        for (r, p) in pieces.iter().enumerate() {
            let finite = [p.lo, p.hi, p.slope, p.intercept].iter().all(|v| v.is_finite());
            // Only the closed last piece may be a single point.
            if !finite || p.hi < p.lo || (r < last && p.hi <= p.lo) {
                return Err(Error::config(format!("statistic piece {r} is malformed: {p:?}")));
            }
        }
        for w in pieces.windows(2) {
            if (w[0].hi - w[1].lo).abs() > PIECE_SNAP * w[0].hi.abs().max(1.0) {
                return Err(Error::config("statistic pieces must be contiguous"));
            }
        }
        Ok(Self { pieces })
    }

    /// `g(x) = x` on `[lo, hi]`.
    pub fn identity(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![Piece {
            lo,
            hi,
            slope: 1.0,
            intercept: 0.0,
        }])
    }

    /// `g(x) = |x - center|` on `[lo, hi]`.
    pub fn abs_deviation(center: f64, lo: f64, hi: f64) -> Result<Self> {
        if center <= lo {
            return Self::new(vec![Piece { lo, hi, slope: 1.0, intercept: -center }]);
        }
        if center >= hi {
            return Self::new(vec![Piece { lo, hi, slope: -1.0, intercept: center }]);
        }
        Self::new(vec![
            Piece { lo, hi: center, slope: -1.0, intercept: center },
            Piece { lo: center, hi, slope: 1.0, intercept: -center },
        ])
    }

    /// `g(x) = 1{a <= x < b}` on `[lo, hi]`; when `b > hi` the point `hi`
    /// is included.
    pub fn indicator(lo: f64, hi: f64, a: f64, b: f64) -> Result<Self> {
        let flat = |lo, hi, v| Piece { lo, hi, slope: 0.0, intercept: v };
        let closed = b > hi && a <= hi;
        let a = a.max(lo);
        let b = b.min(hi);
        if a >= hi {
            let v = if closed { 1.0 } else { 0.0 };
            if lo == hi {
                return Self::new(vec![flat(lo, hi, v)]);
            }
            return Self::new(vec![flat(lo, hi, 0.0), flat(hi, hi, v)]);
        }
        if b <= a {
            return Self::new(vec![flat(lo, hi, 0.0)]);
        }
        let mut pieces = Vec::new();
        if a > lo {
            pieces.push(flat(lo, a, 0.0));
        }
        pieces.push(flat(a, b, 1.0));
        if b < hi {
            pieces.push(flat(b, hi, 0.0));
        } else if !closed {
            pieces.push(flat(hi, hi, 0.0));
        }
        Self::new(pieces)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    /// Index of the piece containing `x`.
    pub fn piece_index(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        let tol = PIECE_SNAP * x.abs().max(1.0);
        if x < lo - tol || x > hi + tol {
            return Err(Error::config(format!("{x} lies outside the statistic domain [{lo}, {hi}]")));
        }
        let last = self.pieces.len() - 1;
        Ok(self
            .pieces
            .iter()
            .position(|p| x < p.hi - tol)
            .unwrap_or(last))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let p = self.pieces[self.piece_index(x)?];
        Ok(p.slope * x + p.intercept)
    }

    /// Infimum and supremum of `g` over its domain, limits included.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.pieces {
            for x in [p.lo, p.hi] {
                let v = p.slope * x + p.intercept;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// `Some((a, b))` when `g(x) = a x + b` on the whole domain.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        let p = self.pieces[0];
        self.pieces
            .iter()
            .all(|q| q.slope == p.slope && q.intercept == p.intercept)
            .then_some((p.slope, p.intercept))
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces.iter().all(|p| p.slope == 0.0)
    }
}

/// `alpha <= E[g(X)] <= beta`; either side may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticBound {
    pub alpha: f64,
    pub beta: f64,
}

impl StatisticBound {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha.is_nan() || beta.is_nan() || alpha > beta {
            return Err(Error::config(format!("statistic bound [{alpha}, {beta}] is empty")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn point(v: f64) -> Self {
        Self { alpha: v, beta: v }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.alpha - tol && v <= self.beta + tol
    }
}

/// `E[g(X)]` under a grid distribution.
pub fn statistic_value(stat: &PiecewiseAffineStatistic, dist: &GridDistribution) -> Result<f64> {
    let mut acc = 0.0;
    for (k, w) in dist.iter() {
        if w > 0.0 {
            acc += w * stat.eval(k as f64 * dist.delta_t())?;
        }
    }
    Ok(acc)
}

/// Maximal run of cells on which every statistic is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPiece {
    pub c_lo: i64,
    pub c_hi: i64,
    /// Slope of each statistic, per budget unit.
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

/// Distributions on the grid cells of one arc constrained by statistic
/// bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    delta_t: f64,
    cells: CellRange,
    statistics: Vec<(PiecewiseAffineStatistic, StatisticBound)>,
    /// `g[q][c - cells.lo]`.
    g: Vec<Vec<f64>>,
    refined: Vec<RefinedPiece>,
    feasible: Vec<(i64, f64)>,
}

impl AmbiguitySet {
    /// Builds the set and checks that it is not empty.
    pub fn new(
        delta_t: f64,
        cells: CellRange,
        statistics: Vec<(PiecewiseAffineStatistic, StatisticBound)>,
    ) -> Result<Self> {
        if !(delta_t > 0.0) || cells.is_empty() || cells.lo < 1 {
            return Err(Error::config("ambiguity set needs a positive grid and support"));
        }
        let mut g = Vec::with_capacity(statistics.len());
        let mut piece_of = Vec::with_capacity(statistics.len());
        for (stat, bound) in &statistics {
            if bound.alpha > bound.beta {
                return Err(Error::config("statistic bound with alpha > beta"));
            }
            let mut values = Vec::with_capacity(cells.len());
            let mut idx = Vec::with_capacity(cells.len());
            for c in cells.lo..=cells.hi {
                let x = c as f64 * delta_t;
                let r = stat.piece_index(x)?;
                let p = stat.pieces()[r];
                values.push(p.slope * x + p.intercept);
                idx.push(r);
            }
            g.push(values);
            piece_of.push(idx);
        }
        let mut refined: Vec<RefinedPiece> = Vec::new();
        let mut key_prev: Option<Vec<usize>> = None;
        for (l, c) in (cells.lo..=cells.hi).enumerate() {
            let key: Vec<usize> = piece_of.iter().map(|v| v[l]).collect();
            if key_prev.as_ref() == Some(&key) {
                refined.last_mut().expect("started").c_hi = c;
            } else {
                let (slopes, intercepts) = statistics
                    .iter()
                    .zip(&key)
                    .map(|((s, _), &r)| (s.pieces()[r].slope, s.pieces()[r].intercept))
                    .unzip();
                refined.push(RefinedPiece {
                    c_lo: c,
                    c_hi: c,
                    slopes,
                    intercepts,
                });
                key_prev = Some(key);
            }
        }
        let mut set = Self {
            delta_t,
            cells,
            statistics,
            g,
            refined,
            feasible: Vec::new(),
        };
        let sol = set
            .solve_over_atoms(&vec![0.0; cells.len()], false)
            .map_err(|e| match e {
                Error::Infeasible(_) => Error::Infeasible("ambiguity set is empty".into()),
                other => other,
            })?;
        set.feasible = sol
            .x
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(l, &p)| (cells.lo + l as i64, p))
            .collect();
        Ok(set)
    }

    /// Set pinned to a single distribution through per-cell indicator
    /// statistics.
    pub fn singleton(pmf: &GridDistribution, cells: CellRange) -> Result<Self> {
        let dt = pmf.delta_t();
        let (lo, hi) = (cells.lo as f64 * dt, cells.hi as f64 * dt);
        let mut stats = Vec::with_capacity(cells.len());
        for c in cells.lo..=cells.hi {
            let a = c as f64 * dt;
            let stat = PiecewiseAffineStatistic::indicator(lo, hi, a, a + dt)?;
            stats.push((stat, StatisticBound::point(pmf.mass_at(c))));
        }
        Self::new(dt, cells, stats)
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn cells(&self) -> CellRange {
        self.cells
    }

    pub fn statistics(&self) -> &[(PiecewiseAffineStatistic, StatisticBound)] {
        &self.statistics
    }

    pub fn statistic_count(&self) -> usize {
        self.statistics.len()
    }

    /// `g_q` at cell `c`.
    pub fn g(&self, q: usize, c: i64) -> f64 {
        self.g[q][(c - self.cells.lo) as usize]
    }

    pub fn refined_pieces(&self) -> &[RefinedPiece] {
        &self.refined
    }

    /// Support of a feasible distribution found at construction.
    pub fn feasible_support(&self) -> &[(i64, f64)] {
        &self.feasible
    }

    /// Bounds on `E[X]` when the only statistic is affine with nonzero
    /// slope.
    pub fn mean_bounds(&self) -> Option<(f64, f64)> {
        if self.statistics.len() != 1 {
            return None;
        }
        let (stat, bound) = &self.statistics[0];
        let (a, b) = stat.as_affine()?;
        if a == 0.0 {
            return None;
        }
        let (x, y) = ((bound.alpha - b) / a, (bound.beta - b) / a);
        Some(if a > 0.0 { (x, y) } else { (y, x) })
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.statistics.iter().all(|(s, _)| s.is_piecewise_constant())
    }

    /// Whether `dist` lies in the set, within `tol` on every statistic.
    pub fn contains(&self, dist: &GridDistribution, tol: f64) -> Result<bool> {
        if dist.iter().any(|(c, w)| w > 0.0 && !self.cells.contains(c)) {
            return Ok(false);
        }
        for (stat, bound) in &self.statistics {
            if !bound.contains(statistic_value(stat, dist)?, tol) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Primal LP over every cell of the support: minimise (or maximise)
    /// `sum_c p_c objective[c - lo]` over the set.
    pub fn solve_over_atoms(&self, objective: &[f64], maximize: bool) -> Result<LpSolution> {
        let cols: Vec<i64> = (self.cells.lo..=self.cells.hi).collect();
        self.solve_over(&cols, objective, maximize)
    }

    /// Same LP restricted to the cells `cols`.
    pub fn solve_over(&self, cols: &[i64], objective: &[f64], maximize: bool) -> Result<LpSolution> {
        let mut lp = LinearProgram {
            objective: objective.to_vec(),
            constraints: Vec::new(),
            maximize,
        };
        lp.push(vec![1.0; cols.len()], Relation::Eq, 1.0);
        for (q, (_, bound)) in self.statistics.iter().enumerate() {
            let row: Vec<f64> = cols.iter().map(|&c| self.g(q, c)).collect();
            if bound.alpha.is_finite() {
                lp.push(row.clone(), Relation::Ge, bound.alpha);
            }
            if bound.beta.is_finite() {
                lp.push(row, Relation::Le, bound.beta);
            }
        }
        lp.solve()
    }
}

/// Interval `center ± range * sqrt(ln(2 * total / epsilon) / (2 n))`
/// around the empirical mean of `g`, clamped to the range of `g`.
pub fn hoeffding_interval(
    samples: &[f64],
    stat: &PiecewiseAffineStatistic,
    total_statistics: usize,
    epsilon: f64,
) -> Result<StatisticBound> {
    if samples.is_empty() {
        return Err(Error::config("Hoeffding interval needs at least one sample"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) || total_statistics == 0 {
        return Err(Error::config("Hoeffding interval needs 0 < epsilon < 1 and a positive statistic count"));
    }
    let mut sum = 0.0;
    for &x in samples {
        sum += stat.eval(x)?;
    }
    let center = sum / samples.len() as f64;
    let (lo, hi) = stat.range();
    let half = hoeffding_half_width(hi - lo, samples.len(), total_statistics, epsilon);
    StatisticBound::new((center - half).max(lo), (center + half).min(hi))
}

pub fn hoeffding_half_width(range: f64, n: usize, total_statistics: usize, epsilon: f64) -> f64 {
    range * ((2.0 / epsilon * total_statistics as f64).ln() / (2.0 * n as f64)).sqrt()
}

/// Percentile bootstrap interval of `E[g(X)]` from `replicates` resamples
/// with replacement.
pub fn bootstrap_interval(
    samples: &[f64],
    stat: &PiecewiseAffineStatistic,
    level: f64,
    replicates: usize,
    seed: u64,
) -> Result<StatisticBound> {
    if samples.is_empty() {
        return Err(Error::config("bootstrap needs at least one sample"));
    }
    if replicates < 100 || !(level > 0.0 && level < 1.0) {
        return Err(Error::config("bootstrap needs at least 100 replicates and 0 < level < 1"));
    }
    let values = samples.iter().map(|&x| stat.eval(x)).collect::<Result<Vec<_>>>()?;
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..replicates)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let b = replicates as f64;
    let lo = ((1.0 - level) / 2.0 * b).floor() as usize;
    let hi = (((1.0 + level) / 2.0 * b).ceil() as usize).clamp(1, replicates) - 1;
    StatisticBound::new(means[lo.min(hi)], means[hi])
}

/// How preset intervals are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalMethod {
    Bootstrap { level: f64, replicates: usize, seed: u64 },
    Hoeffding { epsilon: f64, total_statistics: usize },
}

impl Default for IntervalMethod {
    fn default() -> Self {
        IntervalMethod::Bootstrap {
            level: 0.95,
            replicates: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetConfig {
    pub delta_t: f64,
    pub method: IntervalMethod,
}

/// Sample minimum and maximum snapped outward to the grid, in cells; the
/// lower end is at least one cell.
pub fn estimate_support(samples: &[f64], delta_t: f64) -> Result<CellRange> {
    if samples.is_empty() {
        return Err(Error::config("no samples to estimate a support from"));
    }
    if let Some(x) = samples.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::config(format!("sample costs must be positive, got {x}")));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(0.0, f64::max);
    let lo = ((min / delta_t + 1e-9).floor() as i64).max(1);
    let hi = ((max / delta_t - 1e-9).ceil() as i64).max(lo);
    Ok(CellRange { lo, hi })
}

/// Samples rounded to the grid and clamped to `cells`, in budget units.
pub fn snap_samples(samples: &[f64], delta_t: f64, cells: CellRange) -> Vec<f64> {
    samples
        .iter()
        .map(|&x| round_to_grid(x, delta_t).clamp(cells.lo, cells.hi) as f64 * delta_t)
        .collect()
}

fn interval_for(
    values: &[f64],
    stat: &PiecewiseAffineStatistic,
    method: IntervalMethod,
    stream: u64,
) -> Result<StatisticBound> {
    let bound = match method {
        IntervalMethod::Bootstrap { level, replicates, seed } => {
            bootstrap_interval(values, stat, level, replicates, seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)))?
        }
        IntervalMethod::Hoeffding { epsilon, total_statistics } => {
            hoeffding_interval(values, stat, total_statistics, epsilon)?
        }
    };
    let mut empirical = 0.0;
    for &x in values {
        empirical += stat.eval(x)?;
    }
    empirical /= values.len() as f64;
    let (lo, hi) = stat.range();
    StatisticBound::new(
        bound.alpha.min(empirical).max(lo),
        bound.beta.max(empirical).min(hi),
    )
}

fn preset(samples: &[f64], cfg: &PresetConfig, with_deviation: bool) -> Result<AmbiguitySet> {
    let dt = cfg.delta_t;
    let cells = estimate_support(samples, dt)?;
    let values = snap_samples(samples, dt, cells);
    let (lo, hi) = (cells.lo as f64 * dt, cells.hi as f64 * dt);
    let mean_stat = PiecewiseAffineStatistic::identity(lo, hi)?;
    let mean_bound = interval_for(&values, &mean_stat, cfg.method, 0)?;
    let mut stats = vec![(mean_stat, mean_bound)];
    if with_deviation {
        let center = 0.5 * (mean_bound.alpha + mean_bound.beta);
        let dev = PiecewiseAffineStatistic::abs_deviation(center, lo, hi)?;
        let dev_bound = interval_for(&values, &dev, cfg.method, 1)?;
        stats.push((dev, dev_bound));
    }
    AmbiguitySet::new(dt, cells, stats)
}

/// Mean-interval set `{p : E[X] in I_m}`.
pub fn preset_robust_m(samples: &[f64], cfg: &PresetConfig) -> Result<AmbiguitySet> {
    preset(samples, cfg, false)
}

/// Mean interval plus mean absolute deviation around the interval's
/// midpoint.
pub fn preset_robust_md(samples: &[f64], cfg: &PresetConfig) -> Result<AmbiguitySet> {
    preset(samples, cfg, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_values() {
        let id = PiecewiseAffineStatistic::identity(1.0, 3.0).unwrap();
        assert_eq!(statistic_value(&id, &GridDistribution::point_mass(1.0, 2)).unwrap(), 2.0);
        let dev = PiecewiseAffineStatistic::abs_deviation(2.0, 1.0, 3.0).unwrap();
        let two = GridDistribution::new(1.0, 1, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(statistic_value(&dev, &two).unwrap(), 1.0);
        assert_eq!(dev.pieces().iter().map(|p| p.slope).collect::<Vec<_>>(), vec![-1.0, 1.0]);
        assert!(statistic_value(&id, &GridDistribution::point_mass(1.0, 5)).is_err());
    }

    #[test]
    fn indicator_pieces() {
        let s = PiecewiseAffineStatistic::indicator(1.0, 4.0, 2.0, 3.0).unwrap();
        assert_eq!(s.eval(1.0).unwrap(), 0.0);
        assert_eq!(s.eval(2.0).unwrap(), 1.0);
        assert_eq!(s.eval(2.999).unwrap(), 1.0);
        assert_eq!(s.eval(3.0).unwrap(), 0.0);
        let last = PiecewiseAffineStatistic::indicator(1.0, 4.0, 3.5, 5.0).unwrap();
        assert_eq!(last.eval(4.0).unwrap(), 1.0);
        assert_eq!(last.eval(3.0).unwrap(), 0.0);
    }

    #[test]
    fn hoeffding_examples() {
        let unit = PiecewiseAffineStatistic::identity(0.0, 1.0).unwrap();
        // sqrt(ln(40) / 2) = 1.3581015...
        let hw = hoeffding_half_width(1.0, 1, 1, 0.05);
        assert!((hw - 1.358_101_5).abs() < 1e-6);
        let b = hoeffding_interval(&[0.5], &unit, 1, 0.05).unwrap();
        assert_eq!((b.alpha, b.beta), (0.0, 1.0));
        let b = hoeffding_interval(&[0.3; 10], &unit, 1, 0.05).unwrap();
        assert!((0.5 * (b.alpha + b.beta) - 0.3).abs() < 1e-12 || b.alpha == 0.0);
        let many = vec![0.25; 1_000_000];
        let b = hoeffding_interval(&many, &unit, 1, 0.05).unwrap();
        assert!(b.beta - b.alpha < 0.01);
        assert!(hoeffding_interval(&[], &unit, 1, 0.05).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        let id = PiecewiseAffineStatistic::identity(1.0, 3.0).unwrap();
        let b = bootstrap_interval(&[2.0; 7], &id, 0.95, 200, 1).unwrap();
        assert_eq!((b.alpha, b.beta), (2.0, 2.0));
        let data = [1.0, 3.0, 1.0, 3.0, 1.0, 3.0];
        let b = bootstrap_interval(&data, &id, 0.95, 2000, 9).unwrap();
        assert!(b.alpha <= 2.0 && 2.0 <= b.beta);
        let again = bootstrap_interval(&data, &id, 0.95, 2000, 9).unwrap();
        assert_eq!(b, again);
        assert!(bootstrap_interval(&data, &id, 0.95, 50, 9).is_err());
    }

    #[test]
    fn presets() {
        let cfg = PresetConfig {
            delta_t: 0.5,
            method: IntervalMethod::default(),
        };
        let m = preset_robust_m(&[1.0, 1.6, 3.0, 2.2], &cfg).unwrap();
        assert_eq!(m.cells(), CellRange { lo: 2, hi: 6 });
        let (a, b) = m.mean_bounds().unwrap();
        assert!(1.0 <= a && b <= 3.0);
        let md = preset_robust_md(&[1.0, 1.6, 3.0, 2.2], &cfg).unwrap();
        assert_eq!(md.statistic_count(), 2);
        let one = preset_robust_m(&[1.7], &cfg).unwrap();
        assert_eq!(one.mean_bounds().unwrap(), (1.5, 1.5));
        assert!(preset_robust_m(&[], &cfg).is_err());
    }

    #[test]
    fn empty_set_rejected() {
        let cells = CellRange { lo: 1, hi: 3 };
        let id = PiecewiseAffineStatistic::identity(1.0, 3.0).unwrap();
        let bad = AmbiguitySet::new(1.0, cells, vec![(id, StatisticBound { alpha: 3.5, beta: 4.0 })]);
        assert!(matches!(bad, Err(Error::Infeasible(_))));
    }

    #[test]
    fn singleton_pins_pmf() {
        let pmf = GridDistribution::new(1.0, 2, vec![0.2, 0.0, 0.5, 0.3]).unwrap();
        let set = AmbiguitySet::singleton(&pmf, CellRange { lo: 1, hi: 5 }).unwrap();
        assert!(set.is_piecewise_constant());
        assert!(set.contains(&pmf, 1e-12).unwrap());
        let sol = set.solve_over_atoms(&[0.0, 1.0, 2.0, 3.0, 4.0], true).unwrap();
        assert!((sol.objective - (0.2 + 1.5 + 1.2)).abs() < 1e-9);
    }
}
