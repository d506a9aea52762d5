//! Small dense linear programs: two-phase tableau simplex with duals.
//!
//! Sizes in this crate are tiny (a few dozen rows or columns), so a dense
//! tableau is simpler and faster than anything sparse. Pricing is Dantzig's
//! rule, switching to Bland's rule after a run of degenerate pivots.

use crate::error::{Error, Result};

const PIVOT_TOLERANCE: f64 = 1e-11;
const OPTIMALITY_TOLERANCE: f64 = 1e-10;
const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min` (or `max`) `objective . x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub maximize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Sensitivity of the optimal objective to each right-hand side.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
            maximize: false,
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
            maximize: true,
        }
    }

    pub fn push(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self)?.run(self)
    }
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    art_start: usize,
    cols: usize,
    flipped: Vec<bool>,
    iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        if lp.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite objective coefficient".into()));
        }
        let slacks = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let art_start = n + slacks;
        let cols = art_start + m;
        let mut t = vec![vec![0.0; cols + 1]; m];
        let mut flipped = vec![false; m];
        let mut s = n;
        for (r, c) in lp.constraints.iter().enumerate() {
            if c.coefficients.len() != n {
                return Err(Error::config(format!(
                    "constraint {r} has {} coefficients, expected {n}",
                    c.coefficients.len()
                )));
            }
            if !c.rhs.is_finite() || c.coefficients.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite data in constraint {r}")));
            }
            let sign = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            flipped[r] = sign < 0.0;
            for (j, v) in c.coefficients.iter().enumerate() {
                t[r][j] = sign * v;
            }
            match c.relation {
                Relation::Le => {
                    t[r][s] = sign;
                    s += 1;
                }
                Relation::Ge => {
                    t[r][s] = -sign;
                    s += 1;
                }
                Relation::Eq => {}
            }
            t[r][art_start + r] = 1.0;
            t[r][cols] = sign * c.rhs;
        }
        Ok(Self {
            t,
            basis: (art_start..art_start + m).collect(),
            n,
            art_start,
            cols,
            flipped,
            iterations: 0,
        })
    }

    fn pivot(&mut self, row: usize, col: usize, obj: &mut [f64]) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        let f = obj[col];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            obj[col] = 0.0;
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Minimises the reduced-cost row `obj` (last entry is minus the
    /// objective value) over columns `< allowed`.
    fn optimise(&mut self, obj: &mut [f64], allowed: usize, limit: usize) -> Result<()> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations > limit {
                return Err(Error::Numeric("simplex iteration limit reached".into()));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -OPTIMALITY_TOLERANCE;
            for (j, &d) in obj.iter().enumerate().take(allowed) {
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (r, line) in self.t.iter().enumerate() {
                let a = line[col];
                if a > PIVOT_TOLERANCE {
                    let ratio = line[self.cols] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Unbounded);
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col, obj);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let m = self.t.len();
        let limit = 200 * (m + self.cols + 10);

        // Phase 1: minimise the sum of artificials.
        let mut obj = vec![0.0; self.cols + 1];
        for j in self.art_start..self.cols {
            obj[j] = 1.0;
        }
        for line in &self.t {
            for (o, v) in obj.iter_mut().zip(line) {
                *o -= v;
            }
        }
        for j in self.art_start..self.cols {
            obj[j] = 0.0;
        }
        self.optimise(&mut obj, self.art_start, limit)?;
        let infeasibility = -obj[self.cols];
        let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        if infeasibility > FEASIBILITY_TOLERANCE * scale {
            return Err(Error::Infeasible(format!("phase one residual {infeasibility:e}")));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if self.basis[r] >= self.art_start {
                if let Some(col) = (0..self.art_start).find(|&j| self.t[r][j].abs() > 1e-9) {
                    self.pivot(r, col, &mut obj);
                }
            }
        }

        // Phase 2 on the real objective, artificials barred from entering.
        let sign = if lp.maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; self.cols + 1];
        for (j, c) in lp.objective.iter().enumerate() {
            cost[j] = sign * c;
        }
        let mut obj = cost.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.t[r]) {
                    *o -= cb * v;
                }
            }
        }
        self.optimise(&mut obj, self.art_start, limit)?;

        let mut x = vec![0.0; self.n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.t[r][self.cols].max(0.0);
            }
        }
        let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        // Reduced cost of artificial r is -y_r for the transformed row.
        let duals = (0..m)
            .map(|r| {
                let y = -obj[self.art_start + r];
                let y = if self.flipped[r] { -y } else { y };
                sign * y
            })
            .collect();
        Ok(LpSolution {
            x,
            objective,
            duals,
            iterations: self.iterations,
        })
    }
}
