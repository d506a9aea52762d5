//! Worst-case expectation over an ambiguity set:
//! `min_{p in P} sum_c p_c u(k - c)` over the grid cells `c` of one arc.
//!
//! Everything is posed in two coordinates: arc cost cells `c` and value
//! indices `m = k - c`. Hulls are kept over `(m, u(m))` so that a window
//! slides right as the budget row `k` grows.

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::hull::{HullPoint, HullSide, SlidingHull};
use crate::lp::{LinearProgram, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerMethod {
    /// Mean-only when the set has one affine statistic, piecewise-constant
    /// when no statistic has a slope, column generation otherwise.
    #[default]
    Auto,
    MeanOnly,
    PiecewiseConst,
    ColumnGen,
}

impl InnerMethod {
    /// The procedure `Auto` picks for `set`.
    pub fn resolve(self, set: &AmbiguitySet) -> Self {
        match self {
            InnerMethod::Auto if set.is_piecewise_constant() => InnerMethod::PiecewiseConst,
            InnerMethod::Auto if set.mean_bounds().is_some() => InnerMethod::MeanOnly,
            InnerMethod::Auto => InnerMethod::ColumnGen,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Dual feasibility slack: reduced costs above `-feasibility_tol` are
    /// accepted.
    pub feasibility_tol: f64,
    pub value_tol: f64,
    /// Column generation stops with an error after this many rounds per
    /// support cell.
    pub iteration_factor: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            value_tol: 1e-8,
            iteration_factor: 10,
        }
    }
}

/// Dual multipliers: `z` for total mass, `x_q` for lower bounds and `y_q`
/// for upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub z: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
}

impl DualSolution {
    /// `x_q - y_q`.
    pub fn weights(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(x, y)| x - y).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub value: f64,
    /// Cells and weights of a minimising distribution, when the route
    /// produces one.
    pub support: Vec<(i64, f64)>,
    pub iterations: usize,
}

/// Full primal LP over every cell; `values[c - lo] = u(k - c)`.
pub fn inner_bruteforce(values: &[f64], set: &AmbiguitySet) -> Result<f64> {
    check_len(values, set)?;
    Ok(set.solve_over_atoms(values, false)?.objective)
}

/// The dual LP: maximise `z + sum_q (alpha_q x_q - beta_q y_q)` subject to
/// `z + sum_q (x_q - y_q) g_q(c) <= u(k - c)` at every cell, `x, y >= 0`.
pub fn inner_dual_bruteforce(values: &[f64], set: &AmbiguitySet) -> Result<DualSolution> {
    check_len(values, set)?;
    let q = set.statistic_count();
    // Columns: z+, z-, then x_q, y_q for every statistic.
    let mut objective = vec![1.0, -1.0];
    for (_, b) in set.statistics() {
        objective.push(if b.alpha.is_finite() { b.alpha } else { 0.0 });
        objective.push(if b.beta.is_finite() { -b.beta } else { 0.0 });
    }
    let mut lp = LinearProgram::maximize(objective);
    let cells = set.cells();
    for c in cells.lo..=cells.hi {
        let mut row = vec![1.0, -1.0];
        for s in 0..q {
            let g = set.g(s, c);
            row.push(g);
            row.push(-g);
        }
        lp.push(row, Relation::Le, values[(c - cells.lo) as usize]);
    }
    // Infinite bounds remove their multiplier.
    for (s, (_, b)) in set.statistics().iter().enumerate() {
        let unit = |col: usize| {
            let mut row = vec![0.0; 2 + 2 * q];
            row[col] = 1.0;
            row
        };
        if !b.alpha.is_finite() {
            lp.push(unit(2 + 2 * s), Relation::Le, 0.0);
        }
        if !b.beta.is_finite() {
            lp.push(unit(3 + 2 * s), Relation::Le, 0.0);
        }
    }
    let sol = lp.solve()?;
    Ok(DualSolution {
        z: sol.x[0] - sol.x[1],
        x: (0..q).map(|s| sol.x[2 + 2 * s]).collect(),
        y: (0..q).map(|s| sol.x[3 + 2 * s]).collect(),
        objective: sol.objective,
    })
}

fn check_len(values: &[f64], set: &AmbiguitySet) -> Result<()> {
    let cells = set.cells();
    if values.len() != cells.len() {
        return Err(Error::index("inner value window", values.len() as i64, cells.len() as i64, cells.len() as i64));
    }
    Ok(())
}

/// One lower hull per refined statistic piece, over `(m, u(m))` with
/// `m = k - c` for the piece's cells.
#[derive(Debug, Clone)]
pub struct PieceHulls {
    k: Option<i64>,
    ranges: Vec<(i64, i64)>,
    hulls: Vec<SlidingHull>,
}

impl PieceHulls {
    pub fn new(set: &AmbiguitySet) -> Self {
        let ranges: Vec<(i64, i64)> = set.refined_pieces().iter().map(|p| (p.c_lo, p.c_hi)).collect();
        let hulls = ranges
            .iter()
            .map(|&(lo, hi)| SlidingHull::new(HullSide::Lower, (hi - lo + 1) as usize))
            .collect();
        Self { k: None, ranges, hulls }
    }

    /// Budget row the hulls currently describe.
    pub fn row(&self) -> Option<i64> {
        self.k
    }

    pub fn hull(&self, piece: usize) -> &SlidingHull {
        &self.hulls[piece]
    }

    pub fn piece_count(&self) -> usize {
        self.hulls.len()
    }

    /// Moves the hulls to row `k`, sliding by one when `k` follows the
    /// current row and rebuilding otherwise.
    pub fn sync(&mut self, k: i64, u: &dyn Fn(i64) -> f64) -> Result<()> {
        match self.k {
            Some(cur) if cur == k => return Ok(()),
            Some(cur) if cur + 1 == k => {
                for (h, &(c_lo, _)) in self.hulls.iter_mut().zip(&self.ranges) {
                    let m = k - c_lo;
                    h.advance(m, u(m))?;
                }
            }
            _ => {
                for (h, &(c_lo, c_hi)) in self.hulls.iter_mut().zip(&self.ranges) {
                    *h = SlidingHull::new(HullSide::Lower, (c_hi - c_lo + 1) as usize);
                    for m in (k - c_hi)..=(k - c_lo) {
                        h.push_back(m, u(m))?;
                    }
                }
            }
        }
        self.k = Some(k);
        Ok(())
    }

    /// Total chain pushes and pops across pieces.
    pub fn counters(&self) -> (u64, u64) {
        self.hulls.iter().fold((0, 0), |(a, b), h| {
            let (p, q) = h.counters();
            (a + p, b + q)
        })
    }
}

/// Most violated dual constraint for `dual` at row `k`: the cell with the
/// most negative reduced cost `u(k - c) - z - sum_q (x_q - y_q) g_q(c)`,
/// if below `-tol`.
pub fn separation_oracle(
    hulls: &PieceHulls,
    k: i64,
    set: &AmbiguitySet,
    dual: &DualSolution,
    tol: f64,
) -> Result<Option<(i64, f64)>> {
    if hulls.row() != Some(k) {
        return Err(Error::state(format!("piece hulls are at row {:?}, not {k}", hulls.row())));
    }
    let w = dual.weights();
    let dt = set.delta_t();
    let mut worst: Option<(i64, f64)> = None;
    for (r, piece) in set.refined_pieces().iter().enumerate() {
        let s: f64 = w.iter().zip(&piece.slopes).map(|(w, a)| w * a).sum::<f64>() * dt;
        let offset: f64 = dual.z + w.iter().zip(&piece.intercepts).map(|(w, b)| w * b).sum::<f64>();
        let Some(HullPoint { x: m, y }) = hulls.hull(r).argmin_linear(-s) else {
            continue;
        };
        let c = k - m;
        let reduced = y - s * c as f64 - offset;
        if worst.is_none_or(|(_, v)| reduced < v) {
            worst = Some((c, reduced));
        }
    }
    Ok(worst.filter(|&(_, v)| v < -tol))
}

/// Delayed column generation: solve the primal on the active cells, price
/// the remaining cells through the hulls, add the most negative one, and
/// repeat until no cell prices out. `warm` seeds the active set.
pub fn inner_column_generation(
    hulls: &PieceHulls,
    k: i64,
    set: &AmbiguitySet,
    u: &dyn Fn(i64) -> f64,
    warm: &[i64],
    options: &InnerOptions,
) -> Result<InnerOutcome> {
    let cells = set.cells();
    let mut active: Vec<i64> = warm
        .iter()
        .copied()
        .chain(set.feasible_support().iter().map(|&(c, _)| c))
        .filter(|&c| cells.contains(c))
        .collect();
    active.sort_unstable();
    active.dedup();
    let cap = options.iteration_factor.max(1) * cells.len();
    let mut residual = f64::INFINITY;
    for iteration in 1..=cap {
        let objective: Vec<f64> = active.iter().map(|&c| u(k - c)).collect();
        let sol = set.solve_over(&active, &objective, false)?;
        let dual = master_dual(set, &sol.duals, sol.objective);
        match separation_oracle(hulls, k, set, &dual, options.feasibility_tol)? {
            Some((c, v)) if active.binary_search(&c).is_err() => {
                residual = -v;
                let at = active.partition_point(|&a| a < c);
                active.insert(at, c);
            }
            _ => {
                return Ok(InnerOutcome {
                    value: sol.objective,
                    support: active
                        .iter()
                        .zip(&sol.x)
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(&c, &p)| (c, p))
                        .collect(),
                    iterations: iteration,
                })
            }
        }
    }
    Err(Error::NonConvergence {
        arc: String::new(),
        k,
        residual,
    })
}

/// Maps restricted-master duals (rows ordered as in
/// `AmbiguitySet::solve_over`) to `(z, x, y)`.
fn master_dual(set: &AmbiguitySet, duals: &[f64], objective: f64) -> DualSolution {
    let q = set.statistic_count();
    let mut x = vec![0.0; q];
    let mut y = vec![0.0; q];
    let mut row = 1;
    for (s, (_, b)) in set.statistics().iter().enumerate() {
        if b.alpha.is_finite() {
            x[s] = duals[row].max(0.0);
            row += 1;
        }
        if b.beta.is_finite() {
            y[s] = (-duals[row]).max(0.0);
            row += 1;
        }
    }
    DualSolution {
        z: duals[0],
        x,
        y,
        objective,
    }
}

/// Mean-only sets: the worst case over distributions with
/// `E[X] in [alpha, beta]` is the convex minorant of `c -> u(k - c)`,
/// minimised over the admissible means. In `m = k - c` coordinates the
/// minorant is the lower hull of the whole window.
pub fn inner_mean_only(hull: &SlidingHull, k: i64, delta_t: f64, mean_bounds: (f64, f64)) -> Result<f64> {
    let (m_lo, m_hi) = hull
        .x_range()
        .ok_or_else(|| Error::state("mean-only hull is empty"))?;
    if hull.side() != HullSide::Lower {
        return Err(Error::state("mean-only procedure needs a lower hull"));
    }
    let (alpha, beta) = mean_bounds;
    let a = (k as f64 - beta / delta_t).max(m_lo as f64);
    let b = (k as f64 - alpha / delta_t).min(m_hi as f64);
    if a > b + 1e-9 {
        return Err(Error::Infeasible(format!(
            "mean interval [{alpha}, {beta}] misses the support"
        )));
    }
    let b = b.max(a);
    let star = hull.argmin_linear(0.0).expect("nonempty");
    let v = if b < star.x as f64 {
        hull.value_at(b)
    } else if a > star.x as f64 {
        hull.value_at(a)
    } else {
        Some(star.y)
    };
    v.ok_or_else(|| Error::state("mean-only evaluation outside the window"))
}

/// Sets whose statistics are constant on every refined piece: only the
/// mass per piece matters, and within a piece it sits on the minimum.
pub fn inner_piecewise_constant(hulls: &PieceHulls, k: i64, set: &AmbiguitySet) -> Result<InnerOutcome> {
    if !set.is_piecewise_constant() {
        return Err(Error::config("piecewise-constant route needs slope-free statistics"));
    }
    if hulls.row() != Some(k) {
        return Err(Error::state(format!("piece hulls are at row {:?}, not {k}", hulls.row())));
    }
    let pieces = set.refined_pieces();
    let mins: Vec<HullPoint> = (0..pieces.len())
        .map(|r| hulls.hull(r).argmin_linear(0.0).expect("nonempty"))
        .collect();
    let mut lp = LinearProgram::minimize(mins.iter().map(|p| p.y).collect());
    lp.push(vec![1.0; pieces.len()], Relation::Eq, 1.0);
    for (q, (_, b)) in set.statistics().iter().enumerate() {
        let row: Vec<f64> = pieces.iter().map(|p| p.intercepts[q]).collect();
        if b.alpha.is_finite() {
            lp.push(row.clone(), Relation::Ge, b.alpha);
        }
        if b.beta.is_finite() {
            lp.push(row, Relation::Le, b.beta);
        }
    }
    let sol = lp.solve()?;
    Ok(InnerOutcome {
        value: sol.objective,
        support: mins
            .iter()
            .zip(&sol.x)
            .filter(|(_, &p)| p > 0.0)
            .map(|(pt, &p)| (k - pt.x, p))
            .collect(),
        iterations: 1,
    })
}

/// Runs the chosen route at row `k`. `hulls` must already be synced to
/// `k`.
pub fn solve_inner(
    method: InnerMethod,
    hulls: &PieceHulls,
    k: i64,
    set: &AmbiguitySet,
    u: &dyn Fn(i64) -> f64,
    warm: &[i64],
    options: &InnerOptions,
) -> Result<InnerOutcome> {
    match method.resolve(set) {
        InnerMethod::MeanOnly => {
            let bounds = set
                .mean_bounds()
                .ok_or_else(|| Error::config("mean-only route needs a single affine statistic"))?;
            if hulls.piece_count() != 1 {
                return Err(Error::state("mean-only route expects one hull"));
            }
            if hulls.row() != Some(k) {
                return Err(Error::state(format!("piece hulls are at row {:?}, not {k}", hulls.row())));
            }
            Ok(InnerOutcome {
                value: inner_mean_only(hulls.hull(0), k, set.delta_t(), bounds)?,
                support: Vec::new(),
                iterations: 1,
            })
        }
        InnerMethod::PiecewiseConst => inner_piecewise_constant(hulls, k, set),
        _ => inner_column_generation(hulls, k, set, u, warm, options),
    }
}
