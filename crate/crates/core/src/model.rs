//! Graph, arc-cost distributions, risk functions and the budget grid.
//!
//! Costs and budgets are real numbers ("budget units"). Everything the
//! solvers touch is aligned on a uniform grid of step `delta_t`; an integer
//! `k` on that grid stands for the amount `k * delta_t`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when checking that a real amount is a grid multiple.
const GRID_SNAP: f64 = 1e-7;

/// Weights of a distribution must sum to one within this tolerance.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArcId(pub usize);

impl ArcId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub tail: NodeId,
    pub head: NodeId,
    pub delta_inf: f64,
    pub delta_sup: f64,
}

/// Directed graph with compact arc-cost supports `[delta_inf, delta_sup]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    names: Vec<String>,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<ArcId>>,
    by_pair: HashMap<(NodeId, NodeId), ArcId>,
    source: NodeId,
    destination: NodeId,
}

impl Graph {
    /// Builds a graph. Node ids are positions in `names`; ties anywhere in
    /// the solvers are broken towards the smaller id.
    pub fn new(names: Vec<String>, arcs: Vec<Arc>, source: NodeId, destination: NodeId) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::config("graph has no nodes"));
        }
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if seen.insert(name.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate node id '{name}'")));
            }
        }
        for (label, node) in [("source", source), ("destination", destination)] {
            if node.0 >= n {
                return Err(Error::config(format!("{label} node {} out of range", node.0)));
            }
        }
        let mut out_arcs = vec![Vec::new(); n];
        let mut by_pair = HashMap::new();
        for (a, arc) in arcs.iter().enumerate() {
            if arc.tail.0 >= n || arc.head.0 >= n {
                return Err(Error::config(format!("arc {a} references an unknown node")));
            }
            let label = format!("{}->{}", names[arc.tail.0], names[arc.head.0]);
            if arc.tail == arc.head {
                return Err(Error::config(format!("self-loop {label}")));
            }
            if !(arc.delta_inf > 0.0) || !(arc.delta_inf <= arc.delta_sup) || !arc.delta_sup.is_finite() {
                return Err(Error::config(format!(
                    "arc {label} needs 0 < delta_inf <= delta_sup < inf, got [{}, {}]",
                    arc.delta_inf, arc.delta_sup
                )));
            }
            if by_pair.insert((arc.tail, arc.head), ArcId(a)).is_some() {
                return Err(Error::config(format!("parallel arc {label}")));
            }
            out_arcs[arc.tail.0].push(ArcId(a));
        }
        for list in &mut out_arcs {
            list.sort_by_key(|a| arcs[a.0].head);
        }
        Ok(Self {
            names,
            arcs,
            out_arcs,
            by_pair,
            source,
            destination,
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId)
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id.0]
    }

    /// Outgoing arcs of `node`, sorted by head id.
    pub fn out_arcs(&self, node: NodeId) -> &[ArcId] {
        &self.out_arcs[node.0]
    }

    pub fn find_arc(&self, tail: NodeId, head: NodeId) -> Option<ArcId> {
        self.by_pair.get(&(tail, head)).copied()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name).map(NodeId)
    }

    pub fn arc_label(&self, id: ArcId) -> String {
        let arc = &self.arcs[id.0];
        format!("{}->{}", self.names[arc.tail.0], self.names[arc.head.0])
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    /// Largest `delta_sup` over all arcs.
    pub fn delta_sup(&self) -> f64 {
        self.arcs.iter().map(|a| a.delta_sup).fold(0.0, f64::max)
    }

    /// Smallest `delta_inf` over all arcs.
    pub fn delta_inf(&self) -> f64 {
        self.arcs.iter().map(|a| a.delta_inf).fold(f64::INFINITY, f64::min)
    }

    /// Same topology with new support bounds per arc.
    pub fn with_supports(&self, supports: &[(f64, f64)]) -> Result<Self> {
        if supports.len() != self.arcs.len() {
            return Err(Error::config("support list does not match arc count"));
        }
        let arcs = self
            .arcs
            .iter()
            .zip(supports)
            .map(|(a, &(lo, hi))| Arc {
                delta_inf: lo,
                delta_sup: hi,
                ..a.clone()
            })
            .collect();
        Graph::new(self.names.clone(), arcs, self.source, self.destination)
    }
}

/// Nearest grid index to `x`, halves rounded up.
pub fn round_to_grid(x: f64, delta_t: f64) -> i64 {
    (x / delta_t + 0.5 + 1e-9).floor() as i64
}

/// Integer grid bounds of an arc's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRange {
    pub lo: i64,
    pub hi: i64,
}

impl CellRange {
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, c: i64) -> bool {
        self.lo <= c && c <= self.hi
    }
}

/// Uniform budget grid `{k * delta_t}` up to the total budget `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetGrid {
    delta_t: f64,
    budget: f64,
    k_budget: i64,
}

impl BudgetGrid {
    pub fn new(delta_t: f64, budget: f64) -> Result<Self> {
        if !(delta_t > 0.0) || !delta_t.is_finite() {
            return Err(Error::config(format!("delta_t must be positive, got {delta_t}")));
        }
        if !(budget >= 0.0) || !budget.is_finite() {
            return Err(Error::config(format!("budget must be finite and >= 0, got {budget}")));
        }
        let k_budget = (budget / delta_t + GRID_SNAP).floor() as i64;
        Ok(Self {
            delta_t,
            budget,
            k_budget,
        })
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// `floor(T / delta_t)`.
    pub fn k_budget(&self) -> i64 {
        self.k_budget
    }

    pub fn at(&self, k: i64) -> f64 {
        k as f64 * self.delta_t
    }

    /// `floor(t / delta_t)` with a little slack for representation error.
    pub fn floor_index(&self, t: f64) -> i64 {
        (t / self.delta_t + GRID_SNAP).floor() as i64
    }

    /// Converts an amount that must be a grid multiple into its index.
    pub fn cells(&self, amount: f64) -> Result<i64> {
        let r = amount / self.delta_t;
        let k = r.round();
        if (r - k).abs() > GRID_SNAP * r.abs().max(1.0) {
            return Err(Error::config(format!(
                "{amount} is not a multiple of delta_t = {}",
                self.delta_t
            )));
        }
        Ok(k as i64)
    }

    /// Grid bounds of every arc support; requires `delta_t <= delta_inf` and
    /// grid-aligned supports.
    pub fn arc_cells(&self, graph: &Graph) -> Result<Vec<CellRange>> {
        graph
            .arcs()
            .iter()
            .enumerate()
            .map(|(a, arc)| {
                let label = graph.arc_label(ArcId(a));
                let lo = self
                    .cells(arc.delta_inf)
                    .map_err(|e| Error::config(format!("arc {label}: {e}")))?;
                let hi = self
                    .cells(arc.delta_sup)
                    .map_err(|e| Error::config(format!("arc {label}: {e}")))?;
                if lo < 1 {
                    return Err(Error::config(format!(
                        "arc {label}: delta_t = {} exceeds delta_inf = {}",
                        self.delta_t, arc.delta_inf
                    )));
                }
                Ok(CellRange { lo, hi })
            })
            .collect()
    }
}

/// Probability mass function on `{(offset_k + l) * delta_t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDistribution {
    delta_t: f64,
    offset_k: i64,
    weights: Vec<f64>,
}

impl GridDistribution {
    pub fn new(delta_t: f64, offset_k: i64, weights: Vec<f64>) -> Result<Self> {
        if !(delta_t > 0.0) {
            return Err(Error::config("distribution delta_t must be positive"));
        }
        if weights.is_empty() {
            return Err(Error::config("distribution has no weights"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config("distribution weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::config(format!("distribution weights sum to {total}, not 1")));
        }
        Ok(Self {
            delta_t,
            offset_k,
            weights,
        })
    }

    /// Normalises nonnegative counts into a distribution.
    pub fn from_counts(delta_t: f64, offset_k: i64, counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::config("cannot normalise an all-zero histogram"));
        }
        Self::new(delta_t, offset_k, counts.iter().map(|c| c / total).collect())
    }

    pub fn point_mass(delta_t: f64, k: i64) -> Self {
        Self {
            delta_t,
            offset_k: k,
            weights: vec![1.0],
        }
    }

    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn offset_k(&self) -> i64 {
        self.offset_k
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Grid index of the last weight.
    pub fn last_k(&self) -> i64 {
        self.offset_k + self.weights.len() as i64 - 1
    }

    /// `(k, p_k)` pairs, including zero weights.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(l, &w)| (self.offset_k + l as i64, w))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(k, w)| w * k as f64 * self.delta_t).sum()
    }

    pub fn mass_at(&self, k: i64) -> f64 {
        if k < self.offset_k || k > self.last_k() {
            0.0
        } else {
            self.weights[(k - self.offset_k) as usize]
        }
    }

    /// Checks grid step and support against the owning arc.
    pub fn check_against(&self, grid: &BudgetGrid, cells: CellRange, label: &str) -> Result<()> {
        if (self.delta_t - grid.delta_t()).abs() > GRID_SNAP * grid.delta_t() {
            return Err(Error::config(format!(
                "arc {label}: distribution step {} differs from grid step {}",
                self.delta_t,
                grid.delta_t()
            )));
        }
        let first = self.iter().find(|(_, w)| *w > 0.0).map(|(k, _)| k);
        let last = self.iter().filter(|(_, w)| *w > 0.0).map(|(k, _)| k).last();
        match (first, last) {
            (Some(f), Some(l)) if cells.contains(f) && cells.contains(l) => Ok(()),
            _ => Err(Error::config(format!(
                "arc {label}: distribution support [{}, {}] escapes [{}, {}]",
                self.offset_k, self.last_k(), cells.lo, cells.hi
            ))),
        }
    }
}

/// Payoff applied to the budget overrun `T - X` at arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskFunction {
    /// `f(t) = 1{t >= 0}`: probability of arriving within budget.
    OnTimeIndicator,
    /// `f(t) = t * 1{t <= 0}`: minus the expected overrun.
    ExpectedOverrun,
    /// `f(t) = -t^2 * 1{t <= 0}`.
    SquaredOverrun,
    /// `f(t) = -exp(-t)`. Its optimal tail policy follows a different tree,
    /// so the solvers reject it.
    ExpUtility,
    /// Samples `values[i] = f((k_start + i) * delta_t)`, interpolated
    /// linearly and extended by constants. `t_f` must be supplied.
    Tabulated {
        delta_t: f64,
        k_start: i64,
        values: Vec<f64>,
        t_f: Option<f64>,
    },
}

impl RiskFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RiskFunction::OnTimeIndicator => {
                if t >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RiskFunction::ExpectedOverrun => t.min(0.0),
            RiskFunction::SquaredOverrun => {
                if t <= 0.0 {
                    -t * t
                } else {
                    0.0
                }
            }
            RiskFunction::ExpUtility => -(-t).exp(),
            RiskFunction::Tabulated {
                delta_t,
                k_start,
                values,
                ..
            } => {
                if values.is_empty() {
                    return 0.0;
                }
                let pos = t / delta_t - *k_start as f64;
                if pos <= 0.0 {
                    return values[0];
                }
                let last = values.len() - 1;
                if pos >= last as f64 {
                    return values[last];
                }
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    /// Whether `f` vanishes for negative arguments, which lets solvers skip
    /// the below-threshold initialisation.
    pub fn vanishes_below_zero(&self) -> bool {
        matches!(self, RiskFunction::OnTimeIndicator)
    }

    pub fn is_nondecreasing(&self) -> bool {
        match self {
            RiskFunction::Tabulated { values, .. } => values.windows(2).all(|w| w[0] <= w[1]),
            _ => true,
        }
    }

    /// Largest grid index `k` such that, for every nonnegative cost `X`,
    /// `E[f(k * delta_t - X)]` depends on `X` only through its first two
    /// moments. `None` when no such index exists.
    pub fn tail_index(&self, delta_t: f64) -> Option<i64> {
        match self {
            RiskFunction::OnTimeIndicator => Some(-1),
            RiskFunction::ExpectedOverrun | RiskFunction::SquaredOverrun => Some(0),
            RiskFunction::ExpUtility => None,
            RiskFunction::Tabulated {
                delta_t: step, k_start, ..
            } => Some((*k_start as f64 * step / delta_t + GRID_SNAP).floor() as i64),
        }
    }

    /// `E[f(t - X)]` for `t` at or below the tail index, given `E[X]` and
    /// `E[X^2]`.
    pub fn tail_value(&self, t: f64, mean: f64, second_moment: f64) -> f64 {
        match self {
            RiskFunction::OnTimeIndicator => 0.0,
            RiskFunction::ExpectedOverrun => t - mean,
            RiskFunction::SquaredOverrun => -(t * t - 2.0 * t * mean + second_moment),
            RiskFunction::ExpUtility => f64::NAN,
            RiskFunction::Tabulated { values, .. } => values.first().copied().unwrap_or(0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RiskFunction::OnTimeIndicator => "on-time",
            RiskFunction::ExpectedOverrun => "expected-overrun",
            RiskFunction::SquaredOverrun => "squared-overrun",
            RiskFunction::ExpUtility => "exp-utility",
            RiskFunction::Tabulated { .. } => "tabulated",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn arc(t: usize, h: usize, lo: f64, hi: f64) -> Arc {
        Arc {
            tail: NodeId(t),
            head: NodeId(h),
            delta_inf: lo,
            delta_sup: hi,
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        let n = names(&["s", "d"]);
        assert!(Graph::new(n.clone(), vec![arc(0, 0, 1.0, 2.0)], NodeId(0), NodeId(1)).is_err());
        assert!(Graph::new(n.clone(), vec![arc(0, 1, 0.0, 2.0)], NodeId(0), NodeId(1)).is_err());
        assert!(Graph::new(n.clone(), vec![arc(0, 1, 3.0, 2.0)], NodeId(0), NodeId(1)).is_err());
        assert!(Graph::new(
            n.clone(),
            vec![arc(0, 1, 1.0, 2.0), arc(0, 1, 1.0, 3.0)],
            NodeId(0),
            NodeId(1)
        )
        .is_err());
        assert!(Graph::new(n, vec![arc(0, 1, 1.0, 2.0)], NodeId(0), NodeId(1)).is_ok());
    }

    #[test]
    fn grid_cells_need_multiples() {
        let grid = BudgetGrid::new(0.1, 3.0).unwrap();
        assert_eq!(grid.k_budget(), 30);
        assert_eq!(grid.cells(1.3).unwrap(), 13);
        assert!(grid.cells(1.35).is_err());
        let g = Graph::new(names(&["s", "d"]), vec![arc(0, 1, 0.05, 0.2)], NodeId(0), NodeId(1)).unwrap();
        assert!(matches!(grid.arc_cells(&g), Err(Error::Config(_))));
    }

    #[test]
    fn pmf_validation() {
        assert!(GridDistribution::new(1.0, 1, vec![0.5, 0.4]).is_err());
        assert!(GridDistribution::new(1.0, 1, vec![0.5, -0.1, 0.6]).is_err());
        let p = GridDistribution::new(1.0, 1, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(p.mean(), 2.0);
        assert_eq!(p.last_k(), 3);
    }

    #[test]
    fn risk_functions() {
        assert_eq!(RiskFunction::OnTimeIndicator.eval(0.0), 1.0);
        assert_eq!(RiskFunction::OnTimeIndicator.eval(-1e-9), 0.0);
        assert_eq!(RiskFunction::ExpectedOverrun.eval(-2.5), -2.5);
        assert_eq!(RiskFunction::ExpectedOverrun.eval(3.0), 0.0);
        assert_eq!(RiskFunction::SquaredOverrun.eval(-3.0), -9.0);
        let tab = RiskFunction::Tabulated {
            delta_t: 0.5,
            k_start: -2,
            values: vec![0.0, 1.0, 3.0],
            t_f: Some(0.0),
        };
        assert_eq!(tab.eval(-5.0), 0.0);
        assert_eq!(tab.eval(-0.75), 0.5);
        assert_eq!(tab.eval(-0.25), 2.0);
        assert_eq!(tab.eval(7.0), 3.0);
    }
}
