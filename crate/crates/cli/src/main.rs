//! Command-line front end for the routing solvers.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 3 inconsistent
//! configuration or infeasible data, 4 numerical failure, 5 inner problem
//! did not converge.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_routing::ambiguity::{estimate_support, preset_robust_m, preset_robust_md, IntervalMethod, PresetConfig};
use robust_routing::convolution::ConvolutionEngine;
use robust_routing::experiment::{normalized_budgets, run_experiment, ExperimentConfig, Method};
use robust_routing::inner::{InnerMethod, InnerOptions};
use robust_routing::io::{bin_samples, read_samples_file, require_samples, ArcSamples, GraphFile, PolicyFile, StatisticsFile};
use robust_routing::nominal::{evaluate_policy_exact, solve_nominal, NominalOptions};
use robust_routing::robust::{robust_policy_guarantee, solve_robust, RobustOptions};
use robust_routing::simulate::simulate_policy;
use robust_routing::{BudgetGrid, CellRange, Error, Graph, GridDistribution, Result, RiskFunction};

#[derive(Parser)]
#[command(name = "robust-routing", version, about = "Adaptive routing under budget-overrun risk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal policy for known arc-cost distributions.
    SolveNominal(SolveNominal),
    /// Optimal worst-case policy over ambiguity sets.
    SolveRobust(SolveRobust),
    /// Value of a policy under given distributions or ambiguity sets.
    EvalPolicy(EvalPolicy),
    /// Subsampling experiment comparing methods; writes a CSV report.
    Experiment(Experiment),
    /// Bins observed costs into per-arc distributions of a graph file.
    BinSamples(BinSamples),
}

#[derive(Clone, Copy, ValueEnum)]
enum RiskArg {
    OnTime,
    ExpectedOverrun,
    SquaredOverrun,
    ExpUtility,
}

#[derive(Args)]
struct RiskArgs {
    /// Risk function applied to the budget overrun.
    #[arg(long, value_enum, default_value = "on-time")]
    risk: RiskArg,
    /// JSON risk description; overrides --risk.
    #[arg(long)]
    risk_file: Option<PathBuf>,
}

impl RiskArgs {
    fn resolve(&self) -> Result<RiskFunction> {
        if let Some(path) = &self.risk_file {
            let text = fs::read_to_string(path)?;
            return serde_json::from_str(&text).map_err(|e| Error::Parse(format!("risk file: {e}")));
        }
        Ok(match self.risk {
            RiskArg::OnTime => RiskFunction::OnTimeIndicator,
            RiskArg::ExpectedOverrun => RiskFunction::ExpectedOverrun,
            RiskArg::SquaredOverrun => RiskFunction::SquaredOverrun,
            RiskArg::ExpUtility => RiskFunction::ExpUtility,
        })
    }
}

#[derive(Args)]
struct GridArgs {
    /// Budget T.
    #[arg(long = "budget", short = 'T')]
    budget: f64,
    /// Grid step; must divide every arc support bound.
    #[arg(long)]
    delta_t: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Auto,
    Pointwise,
    Fft,
    Streaming,
}

#[derive(Args)]
struct SolveNominal {
    /// Graph file; arcs carry pmfs unless --samples is given.
    #[arg(long)]
    graph: PathBuf,
    /// Observed costs, binned on the graph's arc supports.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineArg,
    /// Omit the value table from the output.
    #[arg(long)]
    no_values: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    RobustM,
    RobustMd,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnerArg {
    Auto,
    MeanOnly,
    PiecewiseConst,
    ColumnGen,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntervalArg {
    Bootstrap,
    Hoeffding,
}

#[derive(Args)]
struct AmbiguityArgs {
    /// Observed costs; ambiguity sets come from --preset.
    #[arg(long, requires = "preset", conflicts_with = "statistics")]
    samples: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Custom statistics per arc, on the graph's supports.
    #[arg(long)]
    statistics: Option<PathBuf>,
    /// Interval construction for presets.
    #[arg(long, value_enum, default_value = "bootstrap")]
    interval: IntervalArg,
    /// Bootstrap confidence level.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Hoeffding failure probability.
    #[arg(long, default_value_t = 0.05)]
    hoeffding_epsilon: f64,
    #[arg(long, default_value_t = 0, env = "ROBUST_ROUTING_SEED")]
    seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    inner: InnerArg,
    /// Reduced-cost tolerance of the inner problem.
    #[arg(long, default_value_t = 1e-8, env = "ROBUST_ROUTING_TOLERANCE")]
    epsilon: f64,
}

#[derive(Args)]
struct SolveRobust {
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    ambiguity: AmbiguityArgs,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    no_values: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalPolicy {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// Observed costs defining the evaluation distributions.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Worst case over these statistics instead of fixed distributions.
    #[arg(long, conflicts_with = "samples")]
    statistics: Option<PathBuf>,
    #[command(flatten)]
    risk: RiskArgs,
    /// Budget to report; defaults to the policy's.
    #[arg(long = "budget", short = 'T')]
    budget: Option<f64>,
    /// Also estimate the value from this many simulated trips.
    #[arg(long)]
    monte_carlo: Option<usize>,
    #[arg(long, default_value_t = 0, env = "ROBUST_ROUTING_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 1e-8, env = "ROBUST_ROUTING_TOLERANCE")]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Experiment {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    delta_t: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.002,0.005")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, value_delimiter = ',', default_value = "RobustM,RobustMD,Empirical,LET")]
    methods: Vec<String>,
    /// Number of evenly spaced normalised budgets.
    #[arg(long, default_value_t = 11)]
    budgets: usize,
    #[arg(long, default_value_t = 0, env = "ROBUST_ROUTING_SEED")]
    seed: u64,
    #[arg(long, value_enum, default_value = "bootstrap")]
    interval: IntervalArg,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0.05)]
    hoeffding_epsilon: f64,
    #[arg(long, default_value_t = 1e-8, env = "ROBUST_ROUTING_TOLERANCE")]
    epsilon: f64,
    /// Record solve times; makes the report vary between runs.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BinSamples {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    delta_t: f64,
    /// Replace arc supports by the sample range snapped to the grid.
    #[arg(long)]
    estimate_support: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Io(_) => 2,
        Error::Config(_) | Error::Unreachable(_) | Error::Index { .. } | Error::State(_) | Error::Infeasible(_) => 3,
        Error::Numeric(_) | Error::Unbounded => 4,
        Error::NonConvergence { .. } => 5,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_graph(path: &Path) -> Result<(GraphFile, Graph)> {
    let file = GraphFile::read(path)?;
    let graph = file.to_graph()?;
    Ok((file, graph))
}

fn load_samples(path: &Path, graph: &Graph) -> Result<ArcSamples> {
    let samples = read_samples_file(path, graph)?;
    require_samples(graph, &samples)?;
    Ok(samples)
}

/// Distributions from pmfs in the graph file or from binned samples.
fn distributions(file: &GraphFile, graph: &Graph, samples: Option<&Path>, delta_t: f64) -> Result<Vec<GridDistribution>> {
    match samples {
        Some(path) => {
            let samples = load_samples(path, graph)?;
            let grid = BudgetGrid::new(delta_t, delta_t)?;
            let cells = grid.arc_cells(graph)?;
            samples.iter().zip(cells).map(|(s, c)| bin_samples(s, delta_t, c)).collect()
        }
        None => file.distributions(delta_t),
    }
}

fn interval(kind: IntervalArg, confidence: f64, replicates: usize, epsilon: f64, seed: u64, stats: usize) -> IntervalMethod {
    match kind {
        IntervalArg::Bootstrap => IntervalMethod::Bootstrap {
            level: confidence,
            replicates,
            seed,
        },
        IntervalArg::Hoeffding => IntervalMethod::Hoeffding {
            epsilon,
            total_statistics: stats,
        },
    }
}

fn inner_options(method: InnerArg, epsilon: f64) -> RobustOptions {
    RobustOptions {
        method: match method {
            InnerArg::Auto => InnerMethod::Auto,
            InnerArg::MeanOnly => InnerMethod::MeanOnly,
            InnerArg::PiecewiseConst => InnerMethod::PiecewiseConst,
            InnerArg::ColumnGen => InnerMethod::ColumnGen,
        },
        inner: InnerOptions {
            feasibility_tol: epsilon,
            ..InnerOptions::default()
        },
    }
}

fn cmd_solve_nominal(args: &SolveNominal) -> Result<String> {
    let (file, graph) = load_graph(&args.graph)?;
    let dt = args.grid.delta_t;
    let dists = distributions(&file, &graph, args.samples.as_deref(), dt)?;
    let grid = BudgetGrid::new(dt, args.grid.budget)?;
    let engine = match args.engine {
        EngineArg::Auto => ConvolutionEngine::Auto,
        EngineArg::Pointwise => ConvolutionEngine::Pointwise,
        EngineArg::Fft => ConvolutionEngine::FftBlock,
        EngineArg::Streaming => ConvolutionEngine::Streaming,
    };
    let sol = solve_nominal(&graph, &dists, &args.risk.resolve()?, &grid, NominalOptions { engine })?;
    let values = (!args.no_values).then_some(&sol.values);
    PolicyFile::from_tables(&graph, &sol.policy, values).to_json()
}

fn cmd_solve_robust(args: &SolveRobust) -> Result<String> {
    let (_, graph) = load_graph(&args.graph)?;
    let dt = args.grid.delta_t;
    let amb = &args.ambiguity;
    let (graph, sets) = match (&amb.samples, &amb.statistics) {
        (Some(path), None) => {
            let samples = load_samples(path, &graph)?;
            let stats = match amb.preset {
                Some(PresetArg::RobustMd) => 2,
                _ => 1,
            };
            let cfg = PresetConfig {
                delta_t: dt,
                method: interval(amb.interval, amb.confidence, amb.replicates, amb.hoeffding_epsilon, amb.seed, stats),
            };
            let mut supports = Vec::with_capacity(samples.len());
            let mut sets = Vec::with_capacity(samples.len());
            for (a, s) in samples.iter().enumerate() {
                let cfg = match cfg.method {
                    IntervalMethod::Bootstrap { level, replicates, seed } => PresetConfig {
                        method: IntervalMethod::Bootstrap {
                            level,
                            replicates,
                            seed: seed.wrapping_add(a as u64),
                        },
                        ..cfg
                    },
                    _ => cfg,
                };
                let cells: CellRange = estimate_support(s, dt)?;
                supports.push((cells.lo as f64 * dt, cells.hi as f64 * dt));
                sets.push(match amb.preset {
                    Some(PresetArg::RobustMd) => preset_robust_md(s, &cfg)?,
                    _ => preset_robust_m(s, &cfg)?,
                });
            }
            (graph.with_supports(&supports)?, sets)
        }
        (None, Some(path)) => {
            let grid = BudgetGrid::new(dt, args.grid.budget)?;
            let sets = StatisticsFile::read(path)?.ambiguity_sets(&graph, &grid)?;
            (graph, sets)
        }
        _ => return Err(Error::Config("give either --samples with --preset, or --statistics".into())),
    };
    let grid = BudgetGrid::new(dt, args.grid.budget)?;
    let sol = solve_robust(&graph, &sets, &args.risk.resolve()?, &grid, inner_options(amb.inner, amb.epsilon))?;
    let values = (!args.no_values).then_some(&sol.values);
    PolicyFile::from_tables(&graph, &sol.policy, values).to_json()
}

fn cmd_eval_policy(args: &EvalPolicy) -> Result<String> {
    let (file, graph) = load_graph(&args.graph)?;
    let policy = PolicyFile::read(&args.policy)?.to_policy(&graph)?;
    let risk = args.risk.resolve()?;
    let dt = policy.delta_t;
    let k = match args.budget {
        Some(t) => BudgetGrid::new(dt, t)?.k_budget(),
        None => policy.k_budget,
    };
    let source = graph.source();
    let read = |table: &robust_routing::ValueTable| -> Result<f64> {
        match table.k_min(source) {
            Some(k_min) if k < k_min => Err(Error::Index {
                what: "evaluated budget".into(),
                index: k,
                lo: k_min,
                hi: table.k_budget,
            }),
            _ => table.get(source, k),
        }
    };
    let mut report = serde_json::Map::new();
    report.insert("budget".into(), robust_routing::io::format_grid_amount(k, dt).into());
    if let Some(path) = &args.statistics {
        let grid = BudgetGrid::new(dt, dt)?;
        let sets = StatisticsFile::read(path)?.ambiguity_sets(&graph, &grid)?;
        let table = robust_policy_guarantee(&graph, &sets, &policy, &risk, inner_options(InnerArg::Auto, args.epsilon))?;
        report.insert("guarantee".into(), read(&table)?.into());
    } else {
        let dists = distributions(&file, &graph, args.samples.as_deref(), dt)?;
        let table = evaluate_policy_exact(&graph, &dists, &policy, &risk)?;
        report.insert("value".into(), read(&table)?.into());
        if let Some(runs) = args.monte_carlo {
            let mut p = policy.clone();
            p.k_budget = k;
            let sim = simulate_policy(&graph, &dists, &p, &risk, runs, args.seed)?;
            report.insert(
                "monte_carlo".into(),
                serde_json::json!({
                    "runs": sim.runs,
                    "mean": sim.mean,
                    "stderr": sim.stderr,
                    "max_path_length": sim.max_path_length,
                    "loop_runs": sim.loop_runs,
                }),
            );
        }
    }
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn cmd_experiment(args: &Experiment) -> Result<String> {
    let (_, graph) = load_graph(&args.graph)?;
    let samples = load_samples(&args.samples, &graph)?;
    let methods = args.methods.iter().map(|m| Method::parse(m)).collect::<Result<Vec<_>>>()?;
    let stats = if methods.contains(&Method::RobustMD) { 2 } else { 1 };
    let cfg = ExperimentConfig {
        lambda_fractions: args.lambdas.clone(),
        replications: args.replications,
        methods,
        budgets: normalized_budgets(args.budgets),
        seed: args.seed,
        delta_t: args.delta_t,
        interval: interval(args.interval, args.confidence, args.replicates, args.hoeffding_epsilon, args.seed, stats),
        robust: inner_options(InnerArg::Auto, args.epsilon),
        record_timing: args.timing,
    };
    let report = run_experiment(&graph, &samples, &cfg)?;
    if !report.failures.is_empty() {
        eprintln!("warning: {} replications failed and were excluded", report.failures.len());
        for f in &report.failures {
            eprintln!("  {f}");
        }
    }
    report.to_csv_string()
}

fn cmd_bin_samples(args: &BinSamples) -> Result<String> {
    let (file, graph) = load_graph(&args.graph)?;
    let samples = load_samples(&args.samples, &graph)?;
    let dt = args.delta_t;
    let graph = if args.estimate_support {
        let supports = samples
            .iter()
            .map(|s| estimate_support(s, dt).map(|c| (c.lo as f64 * dt, c.hi as f64 * dt)))
            .collect::<Result<Vec<_>>>()?;
        graph.with_supports(&supports)?
    } else {
        graph
    };
    let cells = BudgetGrid::new(dt, dt)?.arc_cells(&graph)?;
    let dists = samples
        .iter()
        .zip(cells)
        .map(|(s, c)| bin_samples(s, dt, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = GraphFile::from_graph(&graph, Some(dt), Some(&dists));
    for (entry, old) in out.arcs.iter_mut().zip(&file.arcs) {
        entry.samples_ref.clone_from(&old.samples_ref);
    }
    out.to_json()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match &cli.command {
        Command::SolveNominal(a) => (cmd_solve_nominal(a), a.out.as_deref()),
        Command::SolveRobust(a) => (cmd_solve_robust(a), a.out.as_deref()),
        Command::EvalPolicy(a) => (cmd_eval_policy(a), a.out.as_deref()),
        Command::Experiment(a) => (cmd_experiment(a), a.out.as_deref()),
        Command::BinSamples(a) => (cmd_bin_samples(a), a.out.as_deref()),
    };
    match result.and_then(|text| emit(out, &text)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
