//! Monte Carlo evaluation of a policy under known arc-cost distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ArcId, Graph, GridDistribution, RiskFunction};
use crate::tables::PolicyTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub runs: usize,
    /// Sample mean of `f(T - X)`.
    pub mean: f64,
    /// Standard error of `mean`.
    pub stderr: f64,
    /// Longest trajectory, in arcs.
    pub max_path_length: usize,
    /// Runs that visited some node twice.
    pub loop_runs: usize,
    /// Upper bound on trajectory length every run was checked against.
    pub path_bound: usize,
}

/// Simulates `runs` trajectories from the source with budget `k_T` of the
/// policy. Arc costs are drawn independently at every traversal.
///
/// Every trajectory must stay within `2 |V| + (k_T - k_f) / c_min` arcs,
/// where `k_f` is the policy's threshold row and `c_min` the smallest cost
/// in cells; longer trajectories are reported as an error.
pub fn simulate_policy(
    graph: &Graph,
    dists: &[GridDistribution],
    policy: &PolicyTable,
    risk: &RiskFunction,
    runs: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if dists.len() != graph.arc_count() || policy.node_count() != graph.node_count() {
        return Err(Error::config("policy, graph and distributions do not match"));
    }
    if runs == 0 {
        return Err(Error::config("at least one run is needed"));
    }
    let dt = policy.delta_t;
    let mut samplers = Vec::with_capacity(dists.len());
    for (a, p) in dists.iter().enumerate() {
        if (p.delta_t() - dt).abs() > 1e-9 * dt || p.offset_k() < 1 {
            return Err(Error::config(format!(
                "arc {}: distribution not on the policy grid with positive costs",
                graph.arc_label(ArcId(a))
            )));
        }
        samplers.push(WeightedIndex::new(p.weights()).map_err(|e| Error::Numeric(e.to_string()))?);
    }
    let c_min = dists.iter().map(GridDistribution::offset_k).min().unwrap_or(1).max(1);
    let k_f = (policy.t_f / dt + 1e-9).floor() as i64;
    let n = graph.node_count();
    let bound = 2 * n + ((policy.k_budget - k_f).max(0) / c_min) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut max_len = 0usize;
    let mut loop_runs = 0usize;
    let mut visited = vec![0usize; n];
    for run in 0..runs {
        let mut node = graph.source();
        let mut k = policy.k_budget;
        let mut len = 0usize;
        let mut looped = false;
        visited.fill(usize::MAX);
        visited[node.0] = run;
        while node != graph.destination() {
            let next = policy.action(node, k).map_err(|e| {
                Error::state(format!("no action at node {} with budget index {k}: {e}", graph.name(node)))
            })?;
            let a = graph.find_arc(node, next).ok_or_else(|| {
                Error::config(format!("policy uses missing arc {}->{}", graph.name(node), graph.name(next)))
            })?;
            let p = &dists[a.0];
            k -= p.offset_k() + samplers[a.0].sample(&mut rng) as i64;
            node = next;
            len += 1;
            if visited[node.0] == run {
                looped = true;
            }
            visited[node.0] = run;
            if len > bound {
                return Err(Error::state(format!(
                    "trajectory exceeded {bound} arcs at node {}",
                    graph.name(node)
                )));
            }
        }
        let payoff = risk.eval(k as f64 * dt);
        sum += payoff;
        sum_sq += payoff * payoff;
        max_len = max_len.max(len);
        loop_runs += looped as usize;
    }
    let nf = runs as f64;
    let mean = sum / nf;
    let var = if runs > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SimulationReport {
        runs,
        mean,
        stderr: (var / nf).sqrt(),
        max_path_length: max_len,
        loop_runs,
        path_bound: bound,
    })
}
