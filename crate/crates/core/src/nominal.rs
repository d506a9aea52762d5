//! Nominal solver: known grid distributions, step-interpolated values.

use std::collections::VecDeque;

use crate::convolution::{convolve_fft_block, convolve_pointwise, ConvolutionEngine, StreamConvolver};
use crate::error::{Error, Result};
use crate::model::{ArcId, BudgetGrid, CellRange, Graph, GridDistribution, NodeId, RiskFunction};
use crate::preprocess::{mean_costs, TreePreprocess, COST_TIE_TOLERANCE};
use crate::tables::{Interpolation, PolicyRow, PolicyTable, ValueRow, ValueTable};

/// Relative tolerance under which two successor values count as tied.
pub const VALUE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NominalOptions {
    pub engine: ConvolutionEngine,
}

#[derive(Debug, Clone)]
pub struct NominalSolution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub preprocess: TreePreprocess,
}

/// Candidate successor during the max step. Keeps the larger value and
/// breaks ties by expected travel time through the successor, then by id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Best {
    pub value: f64,
    pub travel: f64,
    pub node: NodeId,
}

impl Best {
    pub(crate) fn offer(slot: &mut Option<Best>, cand: Best) {
        let Some(cur) = slot else {
            *slot = Some(cand);
            return;
        };
        let tol = VALUE_TIE_TOLERANCE * cur.value.abs().max(cand.value.abs()).max(1.0);
        let better = if (cand.value - cur.value).abs() <= tol {
            let ttol = COST_TIE_TOLERANCE * cur.travel.abs().max(cand.travel.abs()).max(1.0);
            if (cand.travel - cur.travel).abs() <= ttol {
                cand.node < cur.node
            } else {
                cand.travel < cur.travel
            }
        } else {
            cand.value > cur.value
        };
        let value = cur.value.max(cand.value);
        if better {
            *slot = Some(Best { value, ..cand });
        } else {
            cur.value = value;
        }
    }
}

/// Checks grid alignment of the graph and the distributions.
pub(crate) fn validate_inputs(graph: &Graph, dists: &[GridDistribution], grid: &BudgetGrid) -> Result<Vec<CellRange>> {
    let cells = grid.arc_cells(graph)?;
    if dists.len() != graph.arc_count() {
        return Err(Error::config(format!(
            "expected {} arc distributions, got {}",
            graph.arc_count(),
            dists.len()
        )));
    }
    for (a, (p, c)) in dists.iter().zip(&cells).enumerate() {
        p.check_against(grid, *c, &graph.arc_label(ArcId(a)))?;
    }
    Ok(cells)
}

/// Growing value rows of the solver; `vals[i][k - k_min[i]]`.
struct Rows {
    k_min: Vec<Option<i64>>,
    vals: Vec<Vec<f64>>,
}

impl Rows {
    fn at(&self, node: usize, k: i64) -> f64 {
        let base = self.k_min[node].expect("active node");
        self.vals[node][(k - base) as usize]
    }

    fn slice(&self, node: usize, from: i64, to: i64) -> &[f64] {
        let base = self.k_min[node].expect("active node");
        &self.vals[node][(from - base) as usize..=(to - base) as usize]
    }
}

/// Convolution channel of one arc for the row-by-row phase.
enum Channel {
    Pointwise,
    Stream {
        conv: StreamConvolver,
        ready: VecDeque<f64>,
        ready_start: i64,
    },
    Block {
        size: i64,
        start: i64,
        out: Vec<f64>,
    },
}

impl Channel {
    fn new(engine: ConvolutionEngine, pmf: &GridDistribution, first_row: i64, block: i64) -> Self {
        match engine.resolve(pmf.weights().len()) {
            ConvolutionEngine::Streaming => {
                let start = first_row - pmf.last_k();
                Channel::Stream {
                    conv: StreamConvolver::new(pmf, start),
                    ready: VecDeque::new(),
                    ready_start: start + pmf.offset_k(),
                }
            }
            ConvolutionEngine::FftBlock => Channel::Block {
                size: block.max(1),
                start: i64::MIN,
                out: Vec::new(),
            },
            _ => Channel::Pointwise,
        }
    }

    /// `sum_c p(c) u_head(k - c)`; every input index is below `k`.
    fn value(&mut self, k: i64, head: usize, rows: &Rows, pmf: &GridDistribution) -> Result<f64> {
        match self {
            Channel::Pointwise => {
                let lo = k - pmf.last_k();
                let u = rows.slice(head, lo, k - pmf.offset_k());
                convolve_pointwise(u, lo, pmf, k)
            }
            Channel::Stream {
                conv,
                ready,
                ready_start,
            } => {
                while *ready_start + (ready.len() as i64) <= k {
                    let m = conv.next_index();
                    let (_, y) = conv.feed(m, rows.at(head, m))?;
                    ready.push_back(y);
                }
                while *ready_start < k {
                    ready.pop_front();
                    *ready_start += 1;
                }
                Ok(ready[0])
            }
            Channel::Block { size, start, out } => {
                if k < *start || k >= *start + out.len() as i64 {
                    let lo = k - pmf.last_k();
                    let hi = k + *size - 1 - pmf.offset_k();
                    let (first, block) = convolve_fft_block(rows.slice(head, lo, hi), lo, pmf);
                    debug_assert_eq!(first, k);
                    *start = first;
                    *out = block;
                }
                Ok(out[(k - *start) as usize])
            }
        }
    }
}

/// Values of `k -> sum_c p(c) u_head(k - c)` for `k` in `[from, to]`.
fn convolve_range(
    engine: ConvolutionEngine,
    rows: &Rows,
    head: usize,
    pmf: &GridDistribution,
    from: i64,
    to: i64,
) -> Result<Vec<f64>> {
    if to < from {
        return Ok(Vec::new());
    }
    let lo = from - pmf.last_k();
    let hi = to - pmf.offset_k();
    let u = rows.slice(head, lo, hi);
    match engine.resolve(pmf.weights().len()) {
        ConvolutionEngine::FftBlock => Ok(convolve_fft_block(u, lo, pmf).1),
        ConvolutionEngine::Streaming => {
            let mut conv = StreamConvolver::new(pmf, lo);
            let mut out = Vec::with_capacity((to - from + 1) as usize);
            for (i, &x) in u.iter().enumerate() {
                let (k, y) = conv.feed(lo + i as i64, x)?;
                if k >= from {
                    out.push(y);
                }
            }
            Ok(out)
        }
        _ => (from..=to).map(|k| convolve_pointwise(u, lo, pmf, k)).collect(),
    }
}

/// Solves the discretised nominal problem up to the grid budget.
///
/// Rows below `T_f` follow the shortest-path tree on mean costs and are
/// filled node by node in breadth-first order; rows from `T_f` to `T` are
/// filled one budget index at a time, each depending only on rows at least
/// one arc cost lower.
pub fn solve_nominal(
    graph: &Graph,
    dists: &[GridDistribution],
    risk: &RiskFunction,
    grid: &BudgetGrid,
    options: NominalOptions,
) -> Result<NominalSolution> {
    validate_inputs(graph, dists, grid)?;
    let means = mean_costs(graph, dists)?;
    let pre = TreePreprocess::new(graph, means, risk, grid)?;
    let n = graph.node_count();
    let d = graph.destination().0;
    let kt = grid.k_budget();
    let tree_top = (pre.k_tf - 1).min(kt);

    let mut rows = Rows {
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
        let values = if risk.vanishes_below_zero() && tree_top < 0 {
            vec![0.0; (tree_top - k0 + 1).max(0) as usize]
        } else {
            convolve_range(options.engine, &rows, parent.0, &dists[a.0], k0, tree_top)?
        };
        actions[i] = vec![parent; values.len()];
        rows.vals[i] = values;
    }

    if pre.k_tf <= kt {
        let block = dists
            .iter()
            .map(|p| p.offset_k())
            .min()
            .unwrap_or(1);
        let mut channels: Vec<Option<Channel>> = graph
            .arcs()
            .iter()
            .enumerate()
            .map(|(a, arc)| {
                (arc.tail.0 != d && rows.k_min[arc.tail.0].is_some() && rows.k_min[arc.head.0].is_some())
                    .then(|| Channel::new(options.engine, &dists[a], pre.k_tf, block))
            })
            .collect();
        for k in pre.k_tf..=kt {
            for i in 0..n {
                if i == d || rows.k_min[i].is_none() {
                    continue;
                }
                let mut best = None;
                for &a in graph.out_arcs(NodeId(i)) {
                    let Some(ch) = channels[a.0].as_mut() else {
                        continue;
                    };
                    let j = graph.arc(a).head;
                    let value = ch.value(k, j.0, &rows, &dists[a.0])?;
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
        interpolation: Interpolation::Step,
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
    Ok(NominalSolution {
        values,
        policy,
        preprocess: pre,
    })
}

/// First two moments of the cost to the destination when following the
/// fallback tree of `policy` under `dists`.
pub(crate) fn fallback_moments(
    graph: &Graph,
    dists: &[GridDistribution],
    policy: &PolicyTable,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = graph.node_count();
    let d = graph.destination();
    let mut mean = vec![f64::NAN; n];
    let mut second = vec![f64::NAN; n];
    mean[d.0] = 0.0;
    second[d.0] = 0.0;
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
            let p = &dists[a.0];
            let m1 = p.mean();
            let m2: f64 = p.iter().map(|(c, w)| w * (c as f64 * p.delta_t()).powi(2)).sum();
            mean[node.0] = m1 + mean[next.0];
            second[node.0] = m2 + 2.0 * m1 * mean[next.0] + second[next.0];
        }
    }
    Ok((mean, second))
}

/// Lowest row a fixed-policy evaluation must materialise; below it every
/// node follows its fallback and the risk has a closed-form tail. The
/// budget row itself is always materialised.
pub(crate) fn evaluation_base(policy: &PolicyTable, risk: &RiskFunction) -> Result<i64> {
    let tail = risk
        .tail_index(policy.delta_t)
        .ok_or_else(|| Error::config(format!("{} risk has no closed-form tail", risk.label())))?;
    let dev = policy.first_deviation().unwrap_or(i64::MAX);
    Ok(dev.min(tail + 1).min(policy.k_budget))
}

/// Expected risk of following `policy` when arc costs follow `dists`, for
/// every node and every budget row up to the policy's `k_T`.
///
/// `dists` may have different supports from the distributions the policy
/// was computed with but must share its grid step.
pub fn evaluate_policy_exact(
    graph: &Graph,
    dists: &[GridDistribution],
    policy: &PolicyTable,
    risk: &RiskFunction,
) -> Result<ValueTable> {
    if dists.len() != graph.arc_count() || policy.node_count() != graph.node_count() {
        return Err(Error::config("policy, graph and distributions do not match"));
    }
    let dt = policy.delta_t;
    for (a, p) in dists.iter().enumerate() {
        if (p.delta_t() - dt).abs() > 1e-9 * dt || p.offset_k() < 1 {
            return Err(Error::config(format!(
                "arc {}: distribution not on the policy grid with positive costs",
                graph.arc_label(ArcId(a))
            )));
        }
    }
    let (mean, second) = fallback_moments(graph, dists, policy)?;
    let base = evaluation_base(policy, risk)?;
    let kt = policy.k_budget;
    let n = graph.node_count();
    let d = graph.destination().0;
    let active: Vec<bool> = (0..n).map(|i| !mean[i].is_nan()).collect();
    let width = (kt - base + 1).max(0) as usize;
    let mut vals = vec![Vec::with_capacity(width); n];

    let lookup = |vals: &Vec<Vec<f64>>, j: usize, m: i64| -> f64 {
        if m < base {
            risk.tail_value(m as f64 * dt, mean[j], second[j])
        } else {
            vals[j][(m - base) as usize]
        }
    };

    for k in base..=kt {
        for i in 0..n {
            if !active[i] {
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
                dists[a.0].iter().map(|(c, w)| w * lookup(&vals, j.0, k - c)).sum()
            };
            vals[i].push(v);
        }
    }
    Ok(ValueTable {
        delta_t: dt,
        k_budget: kt,
        interpolation: Interpolation::Step,
        rows: (0..n)
            .map(|i| {
                active[i].then(|| ValueRow {
                    k_min: base,
                    values: std::mem::take(&mut vals[i]),
                })
            })
            .collect(),
    })
}

/// Largest violation of the Bellman equation over all materialised rows:
/// tree-only candidates below `T_f`, all successors from `T_f` on.
pub fn bellman_residual(graph: &Graph, dists: &[GridDistribution], solution: &NominalSolution) -> Result<f64> {
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
                let mut acc = 0.0;
                for (c, w) in dists[a.0].iter() {
                    acc += w * values.get(j, k - c)?;
                }
                best = best.max(acc);
            }
            worst = worst.max((u - best).abs());
        }
    }
    Ok(worst)
}
