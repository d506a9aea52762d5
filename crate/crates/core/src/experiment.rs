//! Sample-efficiency experiment: subsample observed arc costs, build each
//! method's policy from the subsample, and score it by exact evaluation
//! against the distributions of the full data.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ambiguity::{estimate_support, preset_robust_m, preset_robust_md, AmbiguitySet, IntervalMethod, PresetConfig};
use crate::error::{Error, Result};
use crate::io::{bin_samples, require_samples, ArcSamples};
use crate::model::{Arc, BudgetGrid, CellRange, Graph, GridDistribution, NodeId, RiskFunction};
use crate::nominal::{evaluate_policy_exact, solve_nominal, NominalOptions};
use crate::preprocess::{mean_costs, shortest_path_tree};
use crate::robust::{solve_robust, RobustOptions};
use crate::tables::{PolicyTable, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Robust solver with a mean interval per arc.
    RobustM,
    /// Robust solver with mean and mean absolute deviation intervals.
    RobustMD,
    /// Nominal solver on the binned subsample.
    Empirical,
    /// Static shortest path on subsample means.
    Let,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::RobustM, Method::RobustMD, Method::Empirical, Method::Let];

    pub fn label(self) -> &'static str {
        match self {
            Method::RobustM => "RobustM",
            Method::RobustMD => "RobustMD",
            Method::Empirical => "Empirical",
            Method::Let => "LET",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub lambda_fractions: Vec<f64>,
    pub replications: usize,
    pub methods: Vec<Method>,
    /// Normalised budgets in `[0, 1]`.
    pub budgets: Vec<f64>,
    pub seed: u64,
    pub delta_t: f64,
    pub interval: IntervalMethod,
    pub robust: RobustOptions,
    /// Fills the runtime column; off for byte-identical reports.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lambda_fractions: vec![0.001, 0.002, 0.005],
            replications: 100,
            methods: Method::ALL.to_vec(),
            budgets: normalized_budgets(11),
            seed: 0,
            delta_t: 1.0,
            interval: IntervalMethod::default(),
            robust: RobustOptions::default(),
            record_timing: false,
        }
    }
}

/// `count` evenly spaced points of `[0, 1]`.
pub fn normalized_budgets(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_fractions.is_empty() || self.lambda_fractions.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::config("fractions must lie in (0, 1]"));
        }
        if self.replications == 0 {
            return Err(Error::config("at least one replication is needed"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        if self.budgets.is_empty() || self.budgets.iter().any(|&b| !(0.0..=1.0).contains(&b)) {
            return Err(Error::config("normalised budgets must lie in [0, 1]"));
        }
        if !(self.delta_t > 0.0) {
            return Err(Error::config("delta_t must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub lambda: f64,
    /// Normalised budget.
    pub budget: f64,
    /// Mean on-time probability over successful replications.
    pub mean_p: f64,
    /// Mean of the lowest 5% of replication outcomes.
    pub worst5_p: f64,
    /// Mean solve time per replication.
    pub runtime_ms: Option<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Budget at normalised 0 and 1.
    pub budget_range: (f64, f64),
    /// Replications that failed, with the reason; excluded from the rows.
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["method", "lambda", "budget", "mean_p", "worst5_p", "runtime_ms"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.method.label().to_string(),
                r.lambda.to_string(),
                r.budget.to_string(),
                r.mean_p.to_string(),
                r.worst5_p.to_string(),
                r.runtime_ms.map_or_else(String::new, |t| format!("{t:.3}")),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Grid supports and binned distributions of `samples`, with the graph's
/// supports replaced by the estimated ones.
pub fn empirical_model(graph: &Graph, samples: &ArcSamples, delta_t: f64) -> Result<(Graph, Vec<CellRange>, Vec<GridDistribution>)> {
    require_samples(graph, samples)?;
    let cells = samples
        .iter()
        .map(|s| estimate_support(s, delta_t))
        .collect::<Result<Vec<_>>>()?;
    let dists = samples
        .iter()
        .zip(&cells)
        .map(|(s, c)| bin_samples(s, delta_t, *c))
        .collect::<Result<Vec<_>>>()?;
    Ok((with_cells(graph, &cells, delta_t)?, cells, dists))
}

fn with_cells(graph: &Graph, cells: &[CellRange], delta_t: f64) -> Result<Graph> {
    let supports: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| (c.lo as f64 * delta_t, c.hi as f64 * delta_t))
        .collect();
    graph.with_supports(&supports)
}

/// Static policy following the shortest-path tree on `weights`.
pub fn let_policy(graph: &Graph, weights: &[f64], grid: &BudgetGrid) -> Result<PolicyTable> {
    let tree = shortest_path_tree(graph, weights)?;
    Ok(PolicyTable {
        delta_t: grid.delta_t(),
        k_budget: grid.k_budget(),
        t_f: 0.0,
        rows: vec![None; graph.node_count()],
        fallback: tree.parent,
    })
}

/// Total minimum and maximum cost along the static shortest path on
/// `dists` means.
pub fn budget_range(graph: &Graph, dists: &[GridDistribution]) -> Result<(f64, f64)> {
    let tree = shortest_path_tree(graph, &mean_costs(graph, dists)?)?;
    let (mut lo, mut hi) = (0.0, 0.0);
    let mut node = graph.source();
    while node != graph.destination() {
        let next = tree.parent[node.0].ok_or_else(|| Error::Unreachable(vec![graph.name(node).to_string()]))?;
        let arc = graph.arc(graph.find_arc(node, next).expect("tree arc"));
        lo += arc.delta_inf;
        hi += arc.delta_sup;
        node = next;
    }
    Ok((lo, hi))
}

/// Draws `max(1, round(lambda * N))` observations per arc without
/// replacement.
pub fn subsample(samples: &ArcSamples, lambda: f64, rng: &mut ChaCha8Rng) -> ArcSamples {
    samples
        .iter()
        .map(|s| {
            let m = ((lambda * s.len() as f64).round() as usize).clamp(1, s.len().max(1));
            let mut idx = sample_indices(rng, s.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| s[i]).collect()
        })
        .collect()
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replication `rep` at fraction index `lambda_index`.
pub fn replication_seed(seed: u64, lambda_index: usize, rep: usize) -> u64 {
    mix(mix(mix(seed) ^ lambda_index as u64) ^ rep as u64)
}

/// Ambiguity sets of a robust method, one per arc, from `sub`.
pub fn preset_sets(method: Method, sub: &ArcSamples, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<AmbiguitySet>> {
    sub.iter()
        .enumerate()
        .map(|(a, s)| {
            let interval = match cfg.interval {
                IntervalMethod::Bootstrap { level, replicates, .. } => IntervalMethod::Bootstrap {
                    level,
                    replicates,
                    seed: mix(seed ^ a as u64),
                },
                other => other,
            };
            let pc = PresetConfig {
                delta_t: cfg.delta_t,
                method: interval,
            };
            match method {
                Method::RobustMD => preset_robust_md(s, &pc),
                _ => preset_robust_m(s, &pc),
            }
        })
        .collect()
}

/// Policy of `method` built from `sub`, on a grid up to `budget`.
pub fn build_policy(
    method: Method,
    graph: &Graph,
    sub: &ArcSamples,
    budget: f64,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PolicyTable> {
    let dt = cfg.delta_t;
    let grid = BudgetGrid::new(dt, budget)?;
    let (g, _, dists) = empirical_model(graph, sub, dt)?;
    let risk = RiskFunction::OnTimeIndicator;
    match method {
        Method::Empirical => Ok(solve_nominal(&g, &dists, &risk, &grid, NominalOptions::default())?.policy),
        Method::Let => let_policy(&g, &mean_costs(&g, &dists)?, &grid),
        Method::RobustM | Method::RobustMD => {
            let sets = preset_sets(method, sub, cfg, seed)?;
            Ok(solve_robust(&g, &sets, &risk, &grid, cfg.robust)?.policy)
        }
    }
}

/// On-time probability at the source for budget row `k`; rows below the
/// evaluated range are zero.
fn source_probability(values: &ValueTable, source: NodeId, k: i64) -> Result<f64> {
    match values.k_min(source) {
        Some(k_min) if k >= k_min => values.get(source, k),
        Some(_) => Ok(0.0),
        None => Err(Error::Unreachable(vec![format!("node {}", source.0)])),
    }
}

struct Outcome {
    method: Method,
    lambda_index: usize,
    scores: Result<(Vec<f64>, f64)>,
    rep: usize,
}

/// Runs every method on every fraction and replication and aggregates
/// on-time probabilities per normalised budget.
///
/// The truth is the binned full data. Budgets are normalised between the
/// minimum and maximum total cost of the static shortest path on the truth.
/// Each policy is solved once at the largest budget and read at every
/// smaller one.
pub fn run_experiment(graph: &Graph, samples: &ArcSamples, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dt = cfg.delta_t;
    let (truth_graph, _, truth) = empirical_model(graph, samples, dt)?;
    let (t_min, t_max) = budget_range(&truth_graph, &truth)?;
    let t_grid = BudgetGrid::new(dt, t_max)?;
    let rows_k: Vec<i64> = cfg
        .budgets
        .iter()
        .map(|b| t_grid.floor_index(t_min + b * (t_max - t_min)))
        .collect();
    let source = graph.source();

    let jobs: Vec<(usize, usize, Method)> = (0..cfg.lambda_fractions.len())
        .flat_map(|l| (0..cfg.replications).flat_map(move |r| cfg.methods.iter().map(move |&m| (l, r, m))))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(l, rep, method)| {
            let seed = replication_seed(cfg.seed, l, rep);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sub = subsample(samples, cfg.lambda_fractions[l], &mut rng);
            let scores = (|| {
                let start = Instant::now();
                let policy = build_policy(method, graph, &sub, t_max, cfg, rng.random())?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                let values = evaluate_policy_exact(&truth_graph, &truth, &policy, &RiskFunction::OnTimeIndicator)?;
                let probs = rows_k
                    .iter()
                    .map(|&k| source_probability(&values, source, k))
                    .collect::<Result<Vec<_>>>()?;
                Ok((probs, elapsed))
            })();
            Outcome {
                method,
                lambda_index: l,
                scores,
                rep,
            }
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (l, &lambda) in cfg.lambda_fractions.iter().enumerate() {
        for &method in &cfg.methods {
            let mut per_budget: Vec<Vec<f64>> = vec![Vec::new(); rows_k.len()];
            let mut time = 0.0;
            let mut ok = 0usize;
            for o in outcomes.iter().filter(|o| o.lambda_index == l && o.method == method) {
                match &o.scores {
                    Ok((probs, elapsed)) => {
                        for (acc, p) in per_budget.iter_mut().zip(probs) {
                            acc.push(*p);
                        }
                        time += elapsed;
                        ok += 1;
                    }
                    Err(e) => failures.push(format!("{} lambda={lambda} rep={}: {e}", method.label(), o.rep)),
                }
            }
            if ok == 0 {
                continue;
            }
            for (b, scores) in cfg.budgets.iter().zip(per_budget) {
                let (mean_p, worst5_p) = mean_and_worst(&scores, 0.05);
                rows.push(ReportRow {
                    method,
                    lambda,
                    budget: *b,
                    mean_p,
                    worst5_p,
                    runtime_ms: cfg.record_timing.then_some(time / ok as f64),
                    replications: ok,
                });
            }
        }
    }
    Ok(ExperimentReport {
        rows,
        budget_range: (t_min, t_max),
        failures,
    })
}

/// Mean of `scores` and mean of its lowest `max(1, round(fraction * n))`
/// entries.
pub fn mean_and_worst(scores: &[f64], fraction: f64) -> (f64, f64) {
    let n = scores.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = ((fraction * n as f64).round() as usize).clamp(1, n);
    let worst = sorted[..m].iter().sum::<f64>() / m as f64;
    (mean, worst)
}

/// A 30-node network with two parallel routes of 14 intermediate nodes
/// between `s` and `d`: route `a` is usually fast but has occasional long
/// delays, route `b` is slower and steady, and rungs every third node allow
/// switching. Costs are drawn continuously; `samples_per_arc` per arc.
pub fn synthetic_two_route(samples_per_arc: usize, seed: u64) -> Result<(Graph, ArcSamples)> {
    const LEN: usize = 14;
    let mut names = vec!["s".to_string()];
    names.extend((1..=LEN).map(|i| format!("a{i}")));
    names.extend((1..=LEN).map(|i| format!("b{i}")));
    names.push("d".to_string());
    let a = |i: usize| NodeId(i);
    let b = |i: usize| NodeId(LEN + i);
    let (s, d) = (NodeId(0), NodeId(2 * LEN + 1));

    #[derive(Clone, Copy)]
    enum Kind {
        Risky,
        Steady,
        Rung,
    }
    let mut arcs: Vec<(NodeId, NodeId, Kind)> = vec![(s, a(1), Kind::Risky), (s, b(1), Kind::Steady)];
    for i in 1..LEN {
        arcs.push((a(i), a(i + 1), Kind::Risky));
        arcs.push((b(i), b(i + 1), Kind::Steady));
    }
    arcs.push((a(LEN), d, Kind::Risky));
    arcs.push((b(LEN), d, Kind::Steady));
    for i in (3..LEN).step_by(3) {
        arcs.push((a(i), b(i), Kind::Rung));
        arcs.push((b(i), a(i), Kind::Rung));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(arcs.len());
    let mut built = Vec::with_capacity(arcs.len());
    for &(tail, head, kind) in &arcs {
        let draw = |rng: &mut ChaCha8Rng| match kind {
            Kind::Risky => {
                if rng.random_bool(0.1) {
                    rng.random_range(2.0..5.0)
                } else {
                    rng.random_range(0.8..1.2)
                }
            }
            Kind::Steady => rng.random_range(1.1..1.5),
            Kind::Rung => rng.random_range(0.5..1.0),
        };
        let costs: Vec<f64> = (0..samples_per_arc).map(|_| draw(&mut rng)).collect();
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().copied().fold(0.0, f64::max);
        built.push(Arc {
            tail,
            head,
            delta_inf: lo,
            delta_sup: hi,
        });
        samples.push(costs);
    }
    Ok((Graph::new(names, built, s, d)?, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_five_percent() {
        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let (mean, worst) = mean_and_worst(&scores, 0.05);
        assert!((mean - 0.495).abs() < 1e-12);
        assert!((worst - 0.02).abs() < 1e-12);
        assert_eq!(mean_and_worst(&[0.3], 0.05), (0.3, 0.3));
    }

    #[test]
    fn subsample_sizes() {
        let samples: ArcSamples = vec![(0..1000).map(|i| 1.0 + i as f64).collect(), vec![2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sub = subsample(&samples, 0.002, &mut rng);
        assert_eq!(sub[0].len(), 2);
        assert_eq!(sub[1], vec![2.0]);
        let full = subsample(&samples, 1.0, &mut rng);
        assert_eq!(full, samples);
    }

    #[test]
    fn method_labels() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }

    #[test]
    fn small_run_is_deterministic() {
        let (g, samples) = synthetic_two_route(200, 5).unwrap();
        let cfg = ExperimentConfig {
            lambda_fractions: vec![0.02],
            replications: 3,
            budgets: normalized_budgets(5),
            delta_t: 0.25,
            interval: IntervalMethod::Hoeffding {
                epsilon: 0.05,
                total_statistics: 2,
            },
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&g, &samples, &cfg).unwrap();
        let b = run_experiment(&g, &samples, &cfg).unwrap();
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        assert_eq!(a.rows.len(), 4 * 5);
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        for r in &a.rows {
            assert!(r.worst5_p <= r.mean_p + 1e-12);
            assert!((0.0..=1.0 + 1e-9).contains(&r.mean_p));
        }
    }
}
