//! Static preprocessing shared by the solvers: mean arc costs, the
//! shortest-path tree towards the destination, the anti-cycling threshold
//! `T_f` and the first materialised grid row `k_min` of every node.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{BudgetGrid, Graph, GridDistribution, NodeId, RiskFunction};

/// Relative tolerance for treating two path costs as equal.
pub const COST_TIE_TOLERANCE: f64 = 1e-12;

/// Expected cost of every arc. `distributions` is indexed like
/// `graph.arcs()`.
pub fn mean_costs(graph: &Graph, distributions: &[GridDistribution]) -> Result<Vec<f64>> {
    if distributions.len() != graph.arc_count() {
        return Err(Error::config(format!(
            "expected {} arc distributions, got {}",
            graph.arc_count(),
            distributions.len()
        )));
    }
    Ok(distributions.iter().map(GridDistribution::mean).collect())
}

/// Shortest-path tree rooted at the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    /// Successor of each node in the tree; `None` for the destination and
    /// for nodes that cannot reach it.
    pub parent: Vec<Option<NodeId>>,
    /// Number of nodes on the tree path to the destination, the
    /// destination itself having level 1. Zero for unreachable nodes.
    pub level: Vec<usize>,
    /// Expected cost-to-go along the tree; infinite when unreachable.
    pub cost_to_go: Vec<f64>,
}

impl ShortestPathTree {
    pub fn reaches(&self, node: NodeId) -> bool {
        self.cost_to_go[node.0].is_finite()
    }

    /// Nodes ordered by level, destination first; ties by id.
    pub fn breadth_first(&self) -> Vec<NodeId> {
        let mut order: Vec<NodeId> = (0..self.level.len())
            .filter(|&i| self.level[i] > 0)
            .map(NodeId)
            .collect();
        order.sort_by_key(|n| (self.level[n.0], n.0));
        order
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn costs_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Dijkstra towards the destination on arc costs `weights`. Among
/// successors achieving the minimum, the smallest node id becomes parent.
///
/// Errors with the names of nodes that the source can reach but that
/// cannot reach the destination.
pub fn shortest_path_tree(graph: &Graph, weights: &[f64]) -> Result<ShortestPathTree> {
    let n = graph.node_count();
    if weights.len() != graph.arc_count() {
        return Err(Error::config("arc weight count does not match the graph"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::config(format!("arc weights must be positive, got {w}")));
    }
    let mut incoming = vec![Vec::new(); n];
    for (a, arc) in graph.arcs().iter().enumerate() {
        incoming[arc.head.0].push(a);
    }
    let d = graph.destination().0;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[d] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem(0.0, d));
    while let Some(HeapItem(di, i)) = heap.pop() {
        if done[i] {
            continue;
        }
        done[i] = true;
        for &a in &incoming[i] {
            let t = graph.arcs()[a].tail.0;
            let cand = di + weights[a];
            if cand < dist[t] {
                dist[t] = cand;
                heap.push(HeapItem(cand, t));
            }
        }
    }

    let stranded: Vec<String> = reachable_from(graph, graph.source())
        .into_iter()
        .filter(|&i| !dist[i].is_finite())
        .map(|i| graph.name(NodeId(i)).to_string())
        .collect();
    if !stranded.is_empty() {
        return Err(Error::Unreachable(stranded));
    }

    let mut parent = vec![None; n];
    for i in 0..n {
        if i == d || !dist[i].is_finite() {
            continue;
        }
        let mut best: Option<(f64, NodeId)> = None;
        for &a in graph.out_arcs(NodeId(i)) {
            let j = graph.arc(a).head;
            if !dist[j.0].is_finite() {
                continue;
            }
            let cand = weights[a.0] + dist[j.0];
            best = match best {
                None => Some((cand, j)),
                Some((b, bj)) if costs_tie(cand, b) => Some((b.min(cand), bj.min(j))),
                Some((b, _)) if cand < b => Some((cand, j)),
                keep => keep,
            };
        }
        parent[i] = best.map(|(_, j)| j);
    }

    let mut order: Vec<usize> = (0..n).filter(|&i| dist[i].is_finite()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut level = vec![0usize; n];
    level[d] = 1;
    // Parents are strictly cheaper, so they are labelled first.
    for &i in &order {
        if let Some(p) = parent[i] {
            level[i] = level[p.0] + 1;
        }
    }
    Ok(ShortestPathTree {
        parent,
        level,
        cost_to_go: dist,
    })
}

fn reachable_from(graph: &Graph, start: NodeId) -> Vec<usize> {
    let mut seen = vec![false; graph.node_count()];
    let mut queue = VecDeque::from([start.0]);
    seen[start.0] = true;
    let mut out = Vec::new();
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for &a in graph.out_arcs(NodeId(i)) {
            let j = graph.arc(a).head.0;
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Threshold below which following the tree is optimal.
///
/// For the squared overrun this is
/// `-(|V| * delta_sup * max_i M_i) / (2 * min gap)`, the gap being the
/// extra expected cost of leaving the tree by one arc; a graph without
/// non-tree arcs gives `T_f = 0`.
pub fn compute_t_f(risk: &RiskFunction, graph: &Graph, weights: &[f64], tree: &ShortestPathTree) -> Result<f64> {
    match risk {
        RiskFunction::OnTimeIndicator | RiskFunction::ExpectedOverrun => Ok(0.0),
        RiskFunction::ExpUtility => Err(Error::config(
            "exponential utility follows a different tree and is not supported by the solvers",
        )),
        RiskFunction::Tabulated { t_f, .. } => match t_f {
            Some(t) if t.is_finite() => Ok(*t),
            _ => Err(Error::config("tabulated risk function needs an explicit finite T_f")),
        },
        RiskFunction::SquaredOverrun => {
            let m = &tree.cost_to_go;
            let mut min_gap = f64::INFINITY;
            for (a, arc) in graph.arcs().iter().enumerate() {
                let (i, j) = (arc.tail, arc.head);
                if i == graph.destination() || !tree.reaches(i) || !tree.reaches(j) || tree.parent[i.0] == Some(j) {
                    continue;
                }
                min_gap = min_gap.min(weights[a] + m[j.0] - m[i.0]);
            }
            if !min_gap.is_finite() {
                return Ok(0.0);
            }
            let max_m = m.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
            if min_gap <= COST_TIE_TOLERANCE * max_m.max(1.0) {
                return Err(Error::config(
                    "a non-tree arc ties with the shortest-path tree; T_f is not finite",
                ));
            }
            Ok(-(graph.node_count() as f64 * graph.delta_sup() * max_m) / (2.0 * min_gap))
        }
    }
}

/// Tree, threshold and first grid rows for one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePreprocess {
    pub tree: ShortestPathTree,
    /// Arc weights the tree was built from (means or worst-case means).
    pub weights: Vec<f64>,
    pub t_f: f64,
    /// `floor(T_f / delta_t)`.
    pub k_tf: i64,
    /// First materialised row per node; `None` for nodes that cannot reach
    /// the destination.
    pub k_min: Vec<Option<i64>>,
}

impl TreePreprocess {
    pub fn new(graph: &Graph, weights: Vec<f64>, risk: &RiskFunction, grid: &BudgetGrid) -> Result<Self> {
        let tree = shortest_path_tree(graph, &weights)?;
        let t_f = compute_t_f(risk, graph, &weights, &tree)?;
        let n = graph.node_count() as f64;
        let k_min = tree
            .level
            .iter()
            .map(|&lvl| {
                (lvl > 0).then(|| grid.floor_index(t_f - (n - lvl as f64 + 1.0) * graph.delta_sup()))
            })
            .collect();
        Ok(Self {
            k_tf: grid.floor_index(t_f),
            tree,
            weights,
            t_f,
            k_min,
        })
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.tree.parent[node.0]
    }

    pub fn cost_to_go(&self, node: NodeId) -> f64 {
        self.tree.cost_to_go[node.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arc;

    fn graph(names: &[&str], arcs: &[(usize, usize)], s: usize, d: usize) -> Graph {
        let arcs = arcs
            .iter()
            .map(|&(t, h)| Arc {
                tail: NodeId(t),
                head: NodeId(h),
                delta_inf: 1.0,
                delta_sup: 5.0,
            })
            .collect();
        Graph::new(names.iter().map(|s| s.to_string()).collect(), arcs, NodeId(s), NodeId(d)).unwrap()
    }

    #[test]
    fn mean_costs_examples() {
        let g = graph(&["s", "d"], &[(0, 1)], 0, 1);
        let p = GridDistribution::new(1.0, 1, vec![0.9, 0.0, 0.0, 0.0, 0.1]).unwrap();
        let m = mean_costs(&g, &[p]).unwrap();
        assert!((m[0] - 1.4).abs() < 1e-12);
        let two = GridDistribution::new(1.0, 1, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(mean_costs(&g, &[two]).unwrap(), vec![2.0]);
        assert!(matches!(mean_costs(&g, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn chain_tree() {
        let g = graph(&["s", "a", "d"], &[(0, 1), (1, 2)], 0, 2);
        let t = shortest_path_tree(&g, &[1.0, 1.0]).unwrap();
        assert_eq!(t.cost_to_go, vec![2.0, 1.0, 0.0]);
        assert_eq!(t.parent, vec![Some(NodeId(1)), Some(NodeId(2)), None]);
        assert_eq!(t.level, vec![3, 2, 1]);
    }

    #[test]
    fn two_routes_pick_cheaper() {
        let g = graph(&["s", "a", "d"], &[(0, 2), (0, 1), (1, 2)], 0, 2);
        let t = shortest_path_tree(&g, &[3.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.parent[0], Some(NodeId(1)));
        assert_eq!(t.cost_to_go[0], 2.0);
    }

    #[test]
    fn cycle_ignored() {
        let g = graph(&["s", "a", "d"], &[(0, 1), (1, 0), (1, 2), (0, 2)], 0, 2);
        let t = shortest_path_tree(&g, &[1.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(t.parent[0], Some(NodeId(1)));
        assert_eq!(t.parent[1], Some(NodeId(2)));
    }

    #[test]
    fn tie_goes_to_smaller_id() {
        let g = graph(&["s", "b", "a", "d"], &[(0, 2), (0, 1), (1, 3), (2, 3)], 0, 3);
        let t = shortest_path_tree(&g, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.parent[0], Some(NodeId(1)));
    }

    #[test]
    fn unreachable_reported() {
        let g = graph(&["s", "x", "d"], &[(0, 1), (0, 2)], 0, 2);
        match shortest_path_tree(&g, &[1.0, 1.0]) {
            Err(Error::Unreachable(v)) => assert_eq!(v, vec!["x".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        // Not reachable from the source: ignored.
        let g = graph(&["s", "x", "d"], &[(1, 0), (0, 2)], 0, 2);
        let t = shortest_path_tree(&g, &[1.0, 1.0]).unwrap();
        assert_eq!(t.level[1], 3);
    }

    #[test]
    fn t_f_rules() {
        let g = graph(&["s", "a", "d"], &[(0, 2), (0, 1), (1, 2)], 0, 2);
        let w = [3.5, 1.0, 1.0];
        let t = shortest_path_tree(&g, &w).unwrap();
        assert_eq!(compute_t_f(&RiskFunction::OnTimeIndicator, &g, &w, &t).unwrap(), 0.0);
        assert_eq!(compute_t_f(&RiskFunction::ExpectedOverrun, &g, &w, &t).unwrap(), 0.0);
        assert!(compute_t_f(&RiskFunction::ExpUtility, &g, &w, &t).is_err());
        let tab = RiskFunction::Tabulated {
            delta_t: 1.0,
            k_start: 0,
            values: vec![0.0, 1.0],
            t_f: None,
        };
        assert!(compute_t_f(&tab, &g, &w, &t).is_err());
        // Only non-tree arc is s->d with gap 3.5 + 0 - 2 = 1.5; |V| = 3,
        // delta_sup = 5, max M = 2: T_f = -(3 * 5 * 2) / (2 * 1.5) = -10.
        let tf = compute_t_f(&RiskFunction::SquaredOverrun, &g, &w, &t).unwrap();
        assert!((tf + 10.0).abs() < 1e-12);
    }

    #[test]
    fn squared_tie_is_error() {
        let g = graph(&["s", "a", "d"], &[(0, 2), (0, 1), (1, 2)], 0, 2);
        let w = [2.0, 1.0, 1.0];
        let t = shortest_path_tree(&g, &w).unwrap();
        assert!(compute_t_f(&RiskFunction::SquaredOverrun, &g, &w, &t).is_err());
    }

    #[test]
    fn k_min_formula() {
        let g = graph(&["s", "a", "d"], &[(0, 1), (1, 2)], 0, 2);
        let grid = BudgetGrid::new(0.5, 10.0).unwrap();
        let p = TreePreprocess::new(&g, vec![1.0, 1.0], &RiskFunction::OnTimeIndicator, &grid).unwrap();
        // T_f = 0, |V| = 3, delta_sup = 5: k_min = floor(-(4 - level) * 5 / 0.5).
        assert_eq!(p.k_min, vec![Some(-10), Some(-20), Some(-30)]);
    }
}
