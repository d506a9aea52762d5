//! File formats: graph and policy documents in JSON, observed arc costs in
//! CSV. Budgets and costs are written as decimal strings; readers accept
//! JSON numbers as well.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ambiguity::{AmbiguitySet, Piece, PiecewiseAffineStatistic, StatisticBound};
use crate::error::{Error, Result};
use crate::model::{round_to_grid, Arc, ArcId, BudgetGrid, CellRange, Graph, GridDistribution, NodeId};
use crate::tables::{Interpolation, PolicyRow, PolicyTable, ValueRow, ValueTable};

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrString {
    Number(f64),
    Text(String),
}

fn parse_decimal<E: serde::de::Error>(v: NumberOrString) -> std::result::Result<f64, E> {
    match v {
        NumberOrString::Number(x) => Ok(x),
        NumberOrString::Text(s) => s
            .trim()
            .parse::<f64>()
            .map_err(|_| E::custom(format!("invalid decimal {s:?}"))),
    }
}

mod decimal {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        parse_decimal(NumberOrString::deserialize(d)?)
    }
}

/// Optional amounts; `null` stands for an infinite bound.
mod decimal_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_str(&x.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        Option::<NumberOrString>::deserialize(d)?.map(parse_decimal).transpose()
    }
}

/// Decimal string of `k * delta_t` without float noise in the last digits.
pub fn format_grid_amount(k: i64, delta_t: f64) -> String {
    let v = k as f64 * delta_t;
    let short = format!("{v:.12}");
    let short = short.trim_end_matches('0').trim_end_matches('.');
    match short.parse::<f64>() {
        Ok(p) if round_to_grid(p, delta_t) == k => short.to_string(),
        _ => v.to_string(),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn node_index(names: &HashMap<&str, usize>, name: &str) -> Result<NodeId> {
    names
        .get(name)
        .map(|&i| NodeId(i))
        .ok_or_else(|| Error::config(format!("unknown node {name:?}")))
}

/// Atom of an arc distribution at grid index `offset_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfEntry {
    pub offset_k: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcEntry {
    pub tail: String,
    pub head: String,
    #[serde(with = "decimal")]
    pub delta_inf: f64,
    #[serde(with = "decimal")]
    pub delta_sup: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<PmfEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_ref: Option<String>,
}

/// Graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default, with = "decimal_opt", skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    pub nodes: Vec<String>,
    pub arcs: Vec<ArcEntry>,
    pub source: String,
    pub destination: String,
}

impl GraphFile {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "graph file")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn from_graph(graph: &Graph, delta_t: Option<f64>, dists: Option<&[GridDistribution]>) -> Self {
        let name = |n: NodeId| graph.name(n).to_string();
        Self {
            delta_t,
            nodes: graph.names().to_vec(),
            arcs: graph
                .arcs()
                .iter()
                .enumerate()
                .map(|(a, arc)| ArcEntry {
                    tail: name(arc.tail),
                    head: name(arc.head),
                    delta_inf: arc.delta_inf,
                    delta_sup: arc.delta_sup,
                    pmf: dists.map(|d| {
                        d[a].iter()
                            .filter(|(_, w)| *w > 0.0)
                            .map(|(k, weight)| PmfEntry { offset_k: k, weight })
                            .collect()
                    }),
                    samples_ref: None,
                })
                .collect(),
            source: graph.name(graph.source()).to_string(),
            destination: graph.name(graph.destination()).to_string(),
        }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        let names: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        if names.len() != self.nodes.len() {
            return Err(Error::config("duplicate node names"));
        }
        let arcs = self
            .arcs
            .iter()
            .map(|a| {
                Ok(Arc {
                    tail: node_index(&names, &a.tail)?,
                    head: node_index(&names, &a.head)?,
                    delta_inf: a.delta_inf,
                    delta_sup: a.delta_sup,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Graph::new(
            self.nodes.clone(),
            arcs,
            node_index(&names, &self.source)?,
            node_index(&names, &self.destination)?,
        )
    }

    /// Arc distributions; every arc needs a `pmf`.
    pub fn distributions(&self, delta_t: f64) -> Result<Vec<GridDistribution>> {
        self.arcs
            .iter()
            .map(|a| {
                let pmf = a
                    .pmf
                    .as_ref()
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| Error::config(format!("arc {}->{} has no pmf", a.tail, a.head)))?;
                let lo = pmf.iter().map(|e| e.offset_k).min().expect("nonempty");
                let hi = pmf.iter().map(|e| e.offset_k).max().expect("nonempty");
                let mut weights = vec![0.0; (hi - lo + 1) as usize];
                for e in pmf {
                    weights[(e.offset_k - lo) as usize] += e.weight;
                }
                GridDistribution::new(delta_t, lo, weights)
            })
            .collect()
    }
}

/// Empirical distribution of `samples` on the grid: every sample goes to
/// its nearest grid point (halves up), clamped to `cells`. Empty edge cells
/// are dropped.
pub fn bin_samples(samples: &[f64], delta_t: f64, cells: CellRange) -> Result<GridDistribution> {
    if samples.is_empty() {
        return Err(Error::config("no samples to bin"));
    }
    if cells.is_empty() {
        return Err(Error::config("empty support"));
    }
    let mut counts = vec![0.0; cells.len()];
    for &x in samples {
        if !x.is_finite() {
            return Err(Error::config(format!("sample {x} is not finite")));
        }
        let k = round_to_grid(x, delta_t).clamp(cells.lo, cells.hi);
        counts[(k - cells.lo) as usize] += 1.0;
    }
    let first = counts.iter().position(|&c| c > 0.0).expect("nonempty");
    let last = counts.iter().rposition(|&c| c > 0.0).expect("nonempty");
    GridDistribution::from_counts(delta_t, cells.lo + first as i64, &counts[first..=last])
}

/// Observed costs per arc, indexed like `graph.arcs()`.
pub type ArcSamples = Vec<Vec<f64>>;

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    arc_tail: String,
    arc_head: String,
    #[serde(with = "decimal")]
    cost: f64,
}

/// Reads `arc_tail,arc_head,cost` rows.
pub fn read_samples<R: Read>(reader: R, graph: &Graph) -> Result<ArcSamples> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    for col in ["arc_tail", "arc_head", "cost"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse(format!("samples file lacks column {col:?}")));
        }
    }
    let mut out = vec![Vec::new(); graph.arc_count()];
    for (line, rec) in rdr.deserialize::<SampleRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("samples row {}: {e}", line + 2)))?;
        let tail = graph
            .node_by_name(&rec.arc_tail)
            .ok_or_else(|| Error::config(format!("samples row {}: unknown node {:?}", line + 2, rec.arc_tail)))?;
        let head = graph
            .node_by_name(&rec.arc_head)
            .ok_or_else(|| Error::config(format!("samples row {}: unknown node {:?}", line + 2, rec.arc_head)))?;
        let a = graph
            .find_arc(tail, head)
            .ok_or_else(|| Error::config(format!("samples row {}: no arc {}->{}", line + 2, rec.arc_tail, rec.arc_head)))?;
        if !(rec.cost > 0.0) || !rec.cost.is_finite() {
            return Err(Error::config(format!("samples row {}: cost must be positive", line + 2)));
        }
        out[a.0].push(rec.cost);
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path, graph: &Graph) -> Result<ArcSamples> {
    read_samples(std::fs::File::open(path)?, graph)
}

pub fn write_samples<W: Write>(writer: W, graph: &Graph, samples: &ArcSamples) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (a, costs) in samples.iter().enumerate() {
        let arc = graph.arc(ArcId(a));
        for &cost in costs {
            w.serialize(SampleRecord {
                arc_tail: graph.name(arc.tail).to_string(),
                arc_head: graph.name(arc.head).to_string(),
                cost,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Errors naming the first arc without observations.
pub fn require_samples(graph: &Graph, samples: &ArcSamples) -> Result<()> {
    match samples.iter().position(Vec::is_empty) {
        Some(a) => Err(Error::config(format!("arc {} has no samples", graph.arc_label(ArcId(a))))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNode {
    pub node: String,
    #[serde(default)]
    pub fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNode {
    pub node: String,
    pub k_min: i64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuesEntry {
    pub interpolation: Interpolation,
    pub rows: Vec<ValueNode>,
}

/// Policy document, optionally with the value table it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    #[serde(with = "decimal")]
    pub delta_t: f64,
    /// Budget `k_T * delta_t`.
    #[serde(rename = "T")]
    pub budget: String,
    #[serde(with = "decimal")]
    pub t_f: f64,
    pub nodes: Vec<PolicyNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ValuesEntry>,
}

impl PolicyFile {
    pub fn from_tables(graph: &Graph, policy: &PolicyTable, values: Option<&ValueTable>) -> Self {
        let name = |n: NodeId| graph.name(n).to_string();
        Self {
            delta_t: policy.delta_t,
            budget: format_grid_amount(policy.k_budget, policy.delta_t),
            t_f: policy.t_f,
            nodes: graph
                .nodes()
                .map(|n| {
                    let row = policy.row(n);
                    PolicyNode {
                        node: name(n),
                        fallback: policy.fallback[n.0].map(name),
                        k_min: row.map(|r| r.k_min),
                        actions: row.map_or_else(Vec::new, |r| r.actions.iter().map(|&a| name(a)).collect()),
                    }
                })
                .collect(),
            values: values.map(|v| ValuesEntry {
                interpolation: v.interpolation,
                rows: graph
                    .nodes()
                    .filter_map(|n| {
                        v.row(n).map(|r| ValueNode {
                            node: name(n),
                            k_min: r.k_min,
                            values: r.values.clone(),
                        })
                    })
                    .collect(),
            }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "policy file")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    pub fn k_budget(&self) -> Result<i64> {
        let t: f64 = self
            .budget
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("invalid budget {:?}", self.budget)))?;
        BudgetGrid::new(self.delta_t, t).map(|g| g.k_budget())
    }

    fn lookup(graph: &Graph, name: &str) -> Result<NodeId> {
        graph
            .node_by_name(name)
            .ok_or_else(|| Error::config(format!("policy names unknown node {name:?}")))
    }

    pub fn to_policy(&self, graph: &Graph) -> Result<PolicyTable> {
        let n = graph.node_count();
        let mut rows = vec![None; n];
        let mut fallback = vec![None; n];
        for entry in &self.nodes {
            let i = Self::lookup(graph, &entry.node)?;
            fallback[i.0] = entry.fallback.as_deref().map(|f| Self::lookup(graph, f)).transpose()?;
            if let Some(k_min) = entry.k_min {
                let actions = entry
                    .actions
                    .iter()
                    .map(|a| Self::lookup(graph, a))
                    .collect::<Result<Vec<_>>>()?;
                rows[i.0] = Some(PolicyRow { k_min, actions });
            }
        }
        Ok(PolicyTable {
            delta_t: self.delta_t,
            k_budget: self.k_budget()?,
            t_f: self.t_f,
            rows,
            fallback,
        })
    }

    pub fn to_values(&self, graph: &Graph) -> Result<Option<ValueTable>> {
        let Some(v) = &self.values else { return Ok(None) };
        let mut rows = vec![None; graph.node_count()];
        for r in &v.rows {
            let i = Self::lookup(graph, &r.node)?;
            rows[i.0] = Some(ValueRow {
                k_min: r.k_min,
                values: r.values.clone(),
            });
        }
        Ok(Some(ValueTable {
            delta_t: self.delta_t,
            k_budget: self.k_budget()?,
            interpolation: v.interpolation,
            rows,
        }))
    }
}

/// Shape of a statistic over an arc's support `[delta_inf, delta_sup]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatisticShape {
    Identity,
    AbsDeviation {
        #[serde(with = "decimal")]
        center: f64,
    },
    Indicator {
        #[serde(with = "decimal")]
        a: f64,
        #[serde(with = "decimal")]
        b: f64,
    },
    Pieces {
        pieces: Vec<Piece>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticEntry {
    #[serde(flatten)]
    pub shape: StatisticShape,
    #[serde(default, with = "decimal_opt")]
    pub alpha: Option<f64>,
    #[serde(default, with = "decimal_opt")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcStatistics {
    pub tail: String,
    pub head: String,
    pub statistics: Vec<StatisticEntry>,
}

/// Custom ambiguity sets, one entry per arc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsFile {
    pub arcs: Vec<ArcStatistics>,
}

impl StatisticsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        parse_json(text, "statistics file")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// Ambiguity sets on the arcs' grid supports.
    pub fn ambiguity_sets(&self, graph: &Graph, grid: &BudgetGrid) -> Result<Vec<AmbiguitySet>> {
        let cells = grid.arc_cells(graph)?;
        let mut sets: Vec<Option<AmbiguitySet>> = vec![None; graph.arc_count()];
        for entry in &self.arcs {
            let find = |name: &str| {
                graph
                    .node_by_name(name)
                    .ok_or_else(|| Error::config(format!("statistics name unknown node {name:?}")))
            };
            let a = graph
                .find_arc(find(&entry.tail)?, find(&entry.head)?)
                .ok_or_else(|| Error::config(format!("statistics for missing arc {}->{}", entry.tail, entry.head)))?;
            let arc = graph.arc(a);
            let (lo, hi) = (arc.delta_inf, arc.delta_sup);
            let stats = entry
                .statistics
                .iter()
                .map(|s| {
                    let stat = match &s.shape {
                        StatisticShape::Identity => PiecewiseAffineStatistic::identity(lo, hi)?,
                        StatisticShape::AbsDeviation { center } => PiecewiseAffineStatistic::abs_deviation(*center, lo, hi)?,
                        StatisticShape::Indicator { a, b } => PiecewiseAffineStatistic::indicator(lo, hi, *a, *b)?,
                        StatisticShape::Pieces { pieces } => PiecewiseAffineStatistic::new(pieces.clone())?,
                    };
                    let bound = StatisticBound::new(
                        s.alpha.unwrap_or(f64::NEG_INFINITY),
                        s.beta.unwrap_or(f64::INFINITY),
                    )?;
                    Ok((stat, bound))
                })
                .collect::<Result<Vec<_>>>()?;
            sets[a.0] = Some(AmbiguitySet::new(grid.delta_t(), cells[a.0], stats)?);
        }
        sets.into_iter()
            .enumerate()
            .map(|(a, s)| s.ok_or_else(|| Error::config(format!("no statistics for arc {}", graph.arc_label(ArcId(a))))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> Graph {
        GraphFile::from_json(
            r#"{"nodes": ["s", "a", "d"], "source": "s", "destination": "d",
                "arcs": [{"tail": "s", "head": "a", "delta_inf": "0.5", "delta_sup": 1.5},
                         {"tail": "a", "head": "d", "delta_inf": "1", "delta_sup": "2"}]}"#,
        )
        .unwrap()
        .to_graph()
        .unwrap()
    }

    #[test]
    fn bin_samples_examples() {
        let cells = CellRange { lo: 10, hi: 20 };
        let p = bin_samples(&[1.26, 1.34], 0.1, cells).unwrap();
        assert_eq!(p, GridDistribution::point_mass(0.1, 13));
        let p = bin_samples(&[1.7, 1.7, 1.7], 0.1, cells).unwrap();
        assert_eq!(p, GridDistribution::point_mass(0.1, 17));
        // Clamped into the support.
        let p = bin_samples(&[0.2, 9.0], 0.1, cells).unwrap();
        assert_eq!(p.offset_k(), 10);
        assert_eq!(p.last_k(), 20);
        assert!(bin_samples(&[], 0.1, cells).is_err());
    }

    #[test]
    fn grid_amounts_are_short() {
        assert_eq!(format_grid_amount(37, 0.1), "3.7");
        assert_eq!(format_grid_amount(-3, 0.5), "-1.5");
        assert_eq!(format_grid_amount(0, 0.2), "0");
    }

    #[test]
    fn graph_round_trip() {
        let g = graph();
        let dists = vec![
            GridDistribution::new(0.5, 1, vec![0.25, 0.5, 0.25]).unwrap(),
            GridDistribution::new(0.5, 2, vec![0.5, 0.0, 0.5]).unwrap(),
        ];
        let file = GraphFile::from_graph(&g, Some(0.5), Some(&dists));
        let text = file.to_json().unwrap();
        assert!(text.contains("\"delta_inf\": \"0.5\""));
        let back = GraphFile::from_json(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_graph().unwrap(), g);
        assert_eq!(back.distributions(0.5).unwrap(), dists);
    }

    #[test]
    fn samples_round_trip_and_errors() {
        let g = graph();
        let samples: ArcSamples = vec![vec![0.7, 1.1], vec![1.5]];
        let mut buf = Vec::new();
        write_samples(&mut buf, &g, &samples).unwrap();
        assert_eq!(read_samples(buf.as_slice(), &g).unwrap(), samples);
        let missing = "arc_tail,cost\ns,1\n";
        assert!(matches!(read_samples(missing.as_bytes(), &g), Err(Error::Parse(_))));
        let bad_arc = "arc_tail,arc_head,cost\nd,s,1\n";
        assert!(matches!(read_samples(bad_arc.as_bytes(), &g), Err(Error::Config(_))));
        let empty = vec![vec![1.0], vec![]];
        assert!(matches!(require_samples(&g, &empty), Err(Error::Config(_))));
    }

    #[test]
    fn policy_round_trip() {
        let g = graph();
        let policy = PolicyTable {
            delta_t: 0.1,
            k_budget: 37,
            t_f: -1.25,
            rows: vec![
                Some(PolicyRow { k_min: -4, actions: vec![NodeId(1); 42] }),
                Some(PolicyRow { k_min: -2, actions: vec![NodeId(2); 40] }),
                None,
            ],
            fallback: vec![Some(NodeId(1)), Some(NodeId(2)), None],
        };
        let values = ValueTable {
            delta_t: 0.1,
            k_budget: 37,
            interpolation: Interpolation::Linear,
            rows: vec![
                Some(ValueRow { k_min: -4, values: (0..42).map(|i| (i as f64 * 0.1).sin() / 3.0).collect() }),
                None,
                Some(ValueRow { k_min: 0, values: vec![1.0; 38] }),
            ],
        };
        let file = PolicyFile::from_tables(&g, &policy, Some(&values));
        assert_eq!(file.budget, "3.7");
        let back = PolicyFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back.to_policy(&g).unwrap(), policy);
        assert_eq!(back.to_values(&g).unwrap().unwrap(), values);
    }

    #[test]
    fn statistics_file() {
        let g = graph();
        let grid = BudgetGrid::new(0.5, 4.0).unwrap();
        let text = r#"{"arcs": [
            {"tail": "s", "head": "a", "statistics": [{"kind": "identity", "alpha": "0.75", "beta": null}]},
            {"tail": "a", "head": "d", "statistics": [
                {"kind": "identity", "alpha": 1.2, "beta": "1.8"},
                {"kind": "abs_deviation", "center": "1.5", "alpha": null, "beta": "0.4"}]}]}"#;
        let file = StatisticsFile::from_json(text).unwrap();
        let sets = file.ambiguity_sets(&g, &grid).unwrap();
        assert_eq!(sets[0].mean_bounds(), Some((0.75, f64::INFINITY)));
        assert_eq!(sets[1].statistic_count(), 2);
        let back = StatisticsFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        let partial = StatisticsFile { arcs: file.arcs[..1].to_vec() };
        assert!(partial.ambiguity_sets(&g, &grid).is_err());
    }
}
