//! Distributionally robust solver: each arc cost is only known to lie in an
//! ambiguity set, and each step takes the worst distribution of the set.

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::inner::{inner_bruteforce, solve_inner, InnerMethod, InnerOptions, PieceHulls};
use crate::model::{ArcId, BudgetGrid, CellRange, Graph, NodeId, RiskFunction};
use crate::nominal::{evaluation_base, Best};
use crate::preprocess::TreePreprocess;
use crate::tables::{Interpolation, PolicyRow, PolicyTable, ValueRow, ValueTable};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RobustOptions {
    pub method: InnerMethod,
    pub inner: InnerOptions,
}

#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    /// Tree and thresholds built on worst-case means.
    pub preprocess: TreePreprocess,
    /// Column generation rounds summed over all inner problems.
    pub inner_iterations: usize,
}

/// Largest mean cost over the set.
pub fn worst_case_mean(set: &AmbiguitySet) -> Result<f64> {
    let cells = set.cells();
    let objective: Vec<f64> = (cells.lo..=cells.hi).map(|c| c as f64 * set.delta_t()).collect();
    let sol = set.solve_over_atoms(&objective, true)?;
    let lo = cells.lo as f64 * set.delta_t();
    let hi = cells.hi as f64 * set.delta_t();
    Ok(sol.objective.clamp(lo, hi))
}

fn validate_sets(graph: &Graph, sets: &[AmbiguitySet], grid: &BudgetGrid) -> Result<Vec<CellRange>> {
    let cells = grid.arc_cells(graph)?;
    if sets.len() != graph.arc_count() {
        return Err(Error::config(format!(
            "expected {} ambiguity sets, got {}",
            graph.arc_count(),
            sets.len()
        )));
    }
    for (a, (set, c)) in sets.iter().zip(&cells).enumerate() {
        if (set.delta_t() - grid.delta_t()).abs() > 1e-9 * grid.delta_t() || set.cells() != *c {
            return Err(Error::config(format!(
                "arc {}: ambiguity set is not on the arc's grid support",
                graph.arc_label(ArcId(a))
            )));
        }
    }
    Ok(cells)
}

/// Worst-case means, tree, `T_f` and first rows.
pub fn robust_preprocess(
    graph: &Graph,
    sets: &[AmbiguitySet],
    risk: &RiskFunction,
    grid: &BudgetGrid,
) -> Result<TreePreprocess> {
    validate_sets(graph, sets, grid)?;
    let means = sets.iter().map(worst_case_mean).collect::<Result<Vec<_>>>()?;
    TreePreprocess::new(graph, means, risk, grid)
}

/// Per-arc state for the row-by-row inner problems.
struct ArcInner {
    hulls: PieceHulls,
    warm: Vec<i64>,
}

fn with_arc_context(err: Error, graph: &Graph, arc: ArcId, k: i64) -> Error {
    match err {
        Error::NonConvergence { residual, .. } => Error::NonConvergence {
            arc: graph.arc_label(arc),
            k,
            residual,
        },
        other => other,
    }
}

struct RowStore {
    k_min: Vec<Option<i64>>,
    vals: Vec<Vec<f64>>,
}

impl RowStore {
    fn at(&self, node: usize, m: i64) -> f64 {
        let base = self.k_min[node].expect("active node");
        self.vals[node][(m - base) as usize]
    }
}

/// Inner value `min_{p in P_a} sum_c p_c u_head(k - c)` at row `k`.
#[allow(clippy::too_many_arguments)]
fn arc_value(
    state: &mut ArcInner,
    graph: &Graph,
    a: ArcId,
    set: &AmbiguitySet,
    rows: &RowStore,
    k: i64,
    options: &RobustOptions,
    constant_shortcut: bool,
    iterations: &mut usize,
) -> Result<f64> {
    let head = graph.arc(a).head.0;
    let u = |m: i64| rows.at(head, m);
    state.hulls.sync(k, &u)?;
    let cells = set.cells();
    if constant_shortcut {
        // Nondecreasing rows: equal endpoints mean a constant window.
        let (lo, hi) = (u(k - cells.hi), u(k - cells.lo));
        if lo == hi {
            return Ok(lo);
        }
    }
    let out = solve_inner(options.method, &state.hulls, k, set, &u, &state.warm, &options.inner)
        .map_err(|e| with_arc_context(e, graph, a, k))?;
    *iterations += out.iterations;
    if !out.support.is_empty() {
        state.warm = out.support.iter().map(|&(c, _)| c).collect();
    }
    Ok(out.value)
}

/// Solves the robust discretised problem up to the grid budget, with the
/// same phases as the nominal solver: destination row, tree rows below
/// `T_f` in breadth-first order, then full rows from `T_f` to `T`.
pub fn solve_robust(
    graph: &Graph,
    sets: &[AmbiguitySet],
    risk: &RiskFunction,
    grid: &BudgetGrid,
    options: RobustOptions,
) -> Result<RobustSolution> {
    let pre = robust_preprocess(graph, sets, risk, grid)?;
    let n = graph.node_count();
    let d = graph.destination().0;
    let kt = grid.k_budget();
    let tree_top = (pre.k_tf - 1).min(kt);
    let shortcut = risk.is_nondecreasing();
    let mut iterations = 0usize;

    let mut rows = RowStore {
        k_min: pre.k_min.clone(),
        vals: vec![Vec::new(); n],
    };
    let mut actions: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    if let Some(kd) = pre.k_min[d] {
        rows.vals[d] = (kd..=kt).map(|k| risk.eval(grid.at(k))).collect();
    }

    for node in pre.tree.breadth_first() {
        let i = node.0;
        if i == d {
            continue;
        }
        let (Some(k0), Some(parent)) = (pre.k_min[i], pre.parent(node)) else {
            continue;
        };
        let a = graph.find_arc(node, parent).expect("tree arc exists");
        if risk.vanishes_below_zero() && tree_top < 0 {
            let len = (tree_top - k0 + 1).max(0) as usize;
            rows.vals[i] = vec![0.0; len];
            actions[i] = vec![parent; len];
            continue;
        }
        let mut state = ArcInner {
            hulls: PieceHulls::new(&sets[a.0]),
            warm: Vec::new(),
        };
        for k in k0..=tree_top {
            let v = arc_value(&mut state, graph, a, &sets[a.0], &rows, k, &options, shortcut, &mut iterations)?;
            rows.vals[i].push(v);
            actions[i].push(parent);
        }
    }

    if pre.k_tf <= kt {
        let mut states: Vec<Option<ArcInner>> = graph
            .arcs()
            .iter()
            .enumerate()
            .map(|(a, arc)| {
                (arc.tail.0 != d && rows.k_min[arc.tail.0].is_some() && rows.k_min[arc.head.0].is_some()).then(|| {
                    ArcInner {
                        hulls: PieceHulls::new(&sets[a]),
                        warm: Vec::new(),
                    }
                })
            })
            .collect();
        for k in pre.k_tf..=kt {
            for i in 0..n {
                if i == d || rows.k_min[i].is_none() {
                    continue;
                }
                let mut best = None;
                for &a in graph.out_arcs(NodeId(i)) {
                    let Some(state) = states[a.0].as_mut() else {
                        continue;
                    };
                    let j = graph.arc(a).head;
                    let value = arc_value(state, graph, a, &sets[a.0], &rows, k, &options, shortcut, &mut iterations)?;
                    let travel = pre.weights[a.0] + pre.cost_to_go(j);
                    Best::offer(&mut best, Best { value, travel, node: j });
                }
                let best = best.ok_or_else(|| Error::state(format!("node {i} has no usable successor")))?;
                rows.vals[i].push(best.value);
                actions[i].push(best.node);
            }
        }
    }

    let values = ValueTable {
        delta_t: grid.delta_t(),
        k_budget: kt,
        interpolation: Interpolation::Linear,
        rows: rows
            .k_min
            .iter()
            .zip(rows.vals)
            .map(|(k, v)| k.map(|k_min| ValueRow { k_min, values: v }))
            .collect(),
    };
    let policy = PolicyTable {
        delta_t: grid.delta_t(),
        k_budget: kt,
        t_f: pre.t_f,
        rows: (0..n)
            .map(|i| {
                (i != d)
                    .then_some(pre.k_min[i])
                    .flatten()
                    .map(|k_min| PolicyRow {
                        k_min,
                        actions: std::mem::take(&mut actions[i]),
                    })
            })
            .collect(),
        fallback: pre.tree.parent.clone(),
    };
    Ok(RobustSolution {
        values,
        policy,
        preprocess: pre,
        inner_iterations: iterations,
    })
}

/// Worst-case expected risk of following `policy` when every arc may take
/// any distribution of its set, independently at every visit.
///
/// Rows from the evaluation base up to `k_T` are computed; below the base
/// every node follows its fallback and the risk's closed-form tail is used
/// with worst-case means summed along the fallback path. Risks whose tail
/// needs more than the mean start at each node's first policy row instead.
pub fn robust_policy_guarantee(
    graph: &Graph,
    sets: &[AmbiguitySet],
    policy: &PolicyTable,
    risk: &RiskFunction,
    options: RobustOptions,
) -> Result<ValueTable> {
    if sets.len() != graph.arc_count() || policy.node_count() != graph.node_count() {
        return Err(Error::config("policy, graph and ambiguity sets do not match"));
    }
    let dt = policy.delta_t;
    for (a, set) in sets.iter().enumerate() {
        if (set.delta_t() - dt).abs() > 1e-9 * dt {
            return Err(Error::config(format!(
                "arc {}: ambiguity set not on the policy grid",
                graph.arc_label(ArcId(a))
            )));
        }
    }
    let n = graph.node_count();
    let d = graph.destination().0;
    let kt = policy.k_budget;
    let worst = sets.iter().map(worst_case_mean).collect::<Result<Vec<_>>>()?;

    // Worst-case cost-to-go along the fallback successors.
    let mut mean = vec![f64::NAN; n];
    mean[d] = 0.0;
    for start in 0..n {
        let mut path = Vec::new();
        let mut cur = NodeId(start);
        while mean[cur.0].is_nan() {
            if path.len() > n {
                return Err(Error::config("fallback successors contain a cycle"));
            }
            path.push(cur);
            match policy.fallback.get(cur.0).copied().flatten() {
                Some(next) => cur = next,
                None => break,
            }
        }
        if mean[cur.0].is_nan() {
            continue;
        }
        for &node in path.iter().rev() {
            let next = policy.fallback[node.0].expect("on path");
            let a = graph
                .find_arc(node, next)
                .ok_or_else(|| Error::config(format!("fallback arc {}->{} missing", graph.name(node), graph.name(next))))?;
            mean[node.0] = worst[a.0] + mean[next.0];
        }
    }
    let active: Vec<bool> = mean.iter().map(|m| !m.is_nan()).collect();

    let closed_tail = !matches!(risk, RiskFunction::SquaredOverrun);
    let starts: Vec<i64> = if closed_tail {
        vec![evaluation_base(policy, risk)?; n]
    } else {
        (0..n)
            .map(|i| {
                if i == d {
                    policy.rows.iter().flatten().map(|r| r.k_min).min().unwrap_or(0)
                } else {
                    policy.row(NodeId(i)).map_or(kt + 1, |r| r.k_min)
                }
            })
            .collect()
    };
    let mut vals: Vec<Vec<f64>> = vec![Vec::new(); n];
    let lookup = |vals: &Vec<Vec<f64>>, j: usize, m: i64| -> Result<f64> {
        if m < starts[j] {
            if closed_tail {
                return Ok(risk.tail_value(m as f64 * dt, mean[j], f64::NAN));
            }
            return Err(Error::index(format!("guarantee row of node {j}"), m, starts[j], kt));
        }
        Ok(vals[j][(m - starts[j]) as usize])
    };
    let mut hulls: Vec<Option<PieceHulls>> = vec![None; graph.arc_count()];
    let lowest = starts.iter().copied().min().unwrap_or(kt + 1);
    for k in lowest..=kt {
        for i in 0..n {
            if !active[i] || k < starts[i] {
                continue;
            }
            let v = if i == d {
                risk.eval(k as f64 * dt)
            } else {
                let j = policy.action(NodeId(i), k)?;
                let a = graph.find_arc(NodeId(i), j).ok_or_else(|| {
                    Error::config(format!("policy uses missing arc {}->{}", graph.name(NodeId(i)), graph.name(j)))
                })?;
                if !active[j.0] {
                    return Err(Error::config(format!(
                        "policy sends node {} to {}, which cannot reach the destination",
                        graph.name(NodeId(i)),
                        graph.name(j)
                    )));
                }
                let set = &sets[a.0];
                let cells = set.cells();
                let window = (cells.lo..=cells.hi)
                    .map(|c| lookup(&vals, j.0, k - c))
                    .collect::<Result<Vec<f64>>>()?;
                let u = |m: i64| window[(k - m - cells.lo) as usize];
                let h = hulls[a.0].get_or_insert_with(|| PieceHulls::new(set));
                h.sync(k, &u)?;
                solve_inner(options.method, h, k, set, &u, &[], &options.inner)
                    .map_err(|e| with_arc_context(e, graph, a, k))?
                    .value
            };
            vals[i].push(v);
        }
    }
    Ok(ValueTable {
        delta_t: dt,
        k_budget: kt,
        interpolation: Interpolation::Linear,
        rows: (0..n)
            .map(|i| {
                (active[i] && starts[i] <= kt).then(|| ValueRow {
                    k_min: starts[i],
                    values: std::mem::take(&mut vals[i]),
                })
            })
            .collect(),
    })
}

/// Largest violation of the robust Bellman equation, with every inner
/// problem solved by the full LP.
pub fn robust_bellman_residual(graph: &Graph, sets: &[AmbiguitySet], solution: &RobustSolution) -> Result<f64> {
    let values = &solution.values;
    let pre = &solution.preprocess;
    let d = graph.destination();
    let mut worst: f64 = 0.0;
    for node in graph.nodes() {
        let Some(row) = values.row(node) else { continue };
        if node == d {
            continue;
        }
        for (idx, &u) in row.values.iter().enumerate() {
            let k = row.k_min + idx as i64;
            let mut best = f64::NEG_INFINITY;
            for &a in graph.out_arcs(node) {
                let j = graph.arc(a).head;
                if values.row(j).is_none() || (k < pre.k_tf && pre.parent(node) != Some(j)) {
                    continue;
                }
                let cells = sets[a.0].cells();
                let window = (cells.lo..=cells.hi)
                    .map(|c| values.get(j, k - c))
                    .collect::<Result<Vec<f64>>>()?;
                best = best.max(inner_bruteforce(&window, &sets[a.0])?);
            }
            worst = worst.max((u - best).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambiguity::{PiecewiseAffineStatistic, StatisticBound};
    use crate::model::{Arc, GridDistribution};
    use crate::nominal::{evaluate_policy_exact, solve_nominal, NominalOptions};

    fn mean_set(lo: i64, hi: i64, alpha: f64, beta: f64) -> AmbiguitySet {
        let id = PiecewiseAffineStatistic::identity(lo as f64, hi as f64).unwrap();
        AmbiguitySet::new(1.0, CellRange { lo, hi }, vec![(id, StatisticBound { alpha, beta })]).unwrap()
    }

    fn single_arc(lo: i64, hi: i64) -> Graph {
        Graph::new(
            vec!["s".into(), "d".into()],
            vec![Arc { tail: NodeId(0), head: NodeId(1), delta_inf: lo as f64, delta_sup: hi as f64 }],
            NodeId(0),
            NodeId(1),
        )
        .unwrap()
    }

    #[test]
    fn worst_case_mean_examples() {
        assert!((worst_case_mean(&mean_set(1, 6, 2.0, 3.5)).unwrap() - 3.5).abs() < 1e-12);
        let pmf = GridDistribution::new(1.0, 2, vec![0.5, 0.25, 0.25]).unwrap();
        let s = AmbiguitySet::singleton(&pmf, CellRange { lo: 1, hi: 5 }).unwrap();
        assert!((worst_case_mean(&s).unwrap() - pmf.mean()).abs() < 1e-12);
    }

    #[test]
    fn single_arc_on_time_is_worst_probability() {
        // Mean in [2, 3] on cells 1..=5, budget 3: the adversary puts 2/3
        // on cell 4 and 1/3 on cell 1.
        let g = single_arc(1, 5);
        let set = mean_set(1, 5, 2.0, 3.0);
        let grid = BudgetGrid::new(1.0, 3.0).unwrap();
        let sol = solve_robust(&g, &[set.clone()], &RiskFunction::OnTimeIndicator, &grid, RobustOptions::default()).unwrap();
        let window: Vec<f64> = (1..=5).map(|c| if c <= 3 { 1.0 } else { 0.0 }).collect();
        let brute = inner_bruteforce(&window, &set).unwrap();
        assert!((brute - 1.0 / 3.0).abs() < 1e-12);
        assert!((sol.values.get(NodeId(0), 3).unwrap() - brute).abs() < 1e-9);
    }

    #[test]
    fn singleton_matches_nominal() {
        let g = Graph::new(
            vec!["s".into(), "a".into(), "d".into()],
            vec![
                Arc { tail: NodeId(0), head: NodeId(2), delta_inf: 1.0, delta_sup: 6.0 },
                Arc { tail: NodeId(0), head: NodeId(1), delta_inf: 1.0, delta_sup: 2.0 },
                Arc { tail: NodeId(1), head: NodeId(2), delta_inf: 1.0, delta_sup: 3.0 },
                Arc { tail: NodeId(1), head: NodeId(0), delta_inf: 1.0, delta_sup: 2.0 },
            ],
            NodeId(0),
            NodeId(2),
        )
        .unwrap();
        let p = vec![
            GridDistribution::new(1.0, 1, vec![0.6, 0.0, 0.0, 0.0, 0.0, 0.4]).unwrap(),
            GridDistribution::new(1.0, 1, vec![0.5, 0.5]).unwrap(),
            GridDistribution::new(1.0, 1, vec![0.2, 0.3, 0.5]).unwrap(),
            GridDistribution::new(1.0, 1, vec![0.7, 0.3]).unwrap(),
        ];
        let grid = BudgetGrid::new(1.0, 20.0).unwrap();
        let cells = grid.arc_cells(&g).unwrap();
        let sets: Vec<AmbiguitySet> = p.iter().zip(&cells).map(|(p, c)| AmbiguitySet::singleton(p, *c).unwrap()).collect();
        for risk in [RiskFunction::OnTimeIndicator, RiskFunction::ExpectedOverrun] {
            let nom = solve_nominal(&g, &p, &risk, &grid, NominalOptions::default()).unwrap();
            let rob = solve_robust(&g, &sets, &risk, &grid, RobustOptions::default()).unwrap();
            for node in g.nodes() {
                let (a, b) = (nom.values.row(node).unwrap(), rob.values.row(node).unwrap());
                assert_eq!(a.k_min, b.k_min);
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!((x - y).abs() < 1e-7);
                }
            }
            assert!(robust_bellman_residual(&g, &sets, &rob).unwrap() < 1e-7);
            let guarantee = robust_policy_guarantee(&g, &sets, &rob.policy, &risk, RobustOptions::default()).unwrap();
            let exact = evaluate_policy_exact(&g, &p, &rob.policy, &risk).unwrap();
            for k in 1..=20 {
                let (x, y) = (guarantee.get(NodeId(0), k).unwrap(), exact.get(NodeId(0), k).unwrap());
                assert!((x - y).abs() < 1e-7);
                assert!((x - rob.values.get(NodeId(0), k).unwrap()).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rejects_mismatched_sets() {
        let g = single_arc(1, 5);
        let grid = BudgetGrid::new(1.0, 3.0).unwrap();
        let set = mean_set(1, 4, 2.0, 3.0);
        assert!(solve_robust(&g, &[set], &RiskFunction::OnTimeIndicator, &grid, RobustOptions::default()).is_err());
    }
}
