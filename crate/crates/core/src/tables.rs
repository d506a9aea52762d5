//! Per-node value and policy rows over the budget grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NodeId;

/// How values between grid points are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// `u(t) = u(floor(t / delta_t) * delta_t)`; used by the nominal scheme.
    Step,
    /// Linear blend of the two neighbouring grid values; used by the robust
    /// scheme, whose inner duality argument needs continuity.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub k_min: i64,
    pub values: Vec<f64>,
}

/// `u_i(k * delta_t)` for `k` in `[k_min_i, k_T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub delta_t: f64,
    pub k_budget: i64,
    pub interpolation: Interpolation,
    pub rows: Vec<Option<ValueRow>>,
}

impl ValueTable {
    pub fn row(&self, node: NodeId) -> Option<&ValueRow> {
        self.rows.get(node.0).and_then(Option::as_ref)
    }

    pub fn k_min(&self, node: NodeId) -> Option<i64> {
        self.row(node).map(|r| r.k_min)
    }

    /// Grid value; errors outside the materialised range.
    pub fn get(&self, node: NodeId, k: i64) -> Result<f64> {
        let row = self
            .row(node)
            .ok_or_else(|| Error::state(format!("node {} has no value row", node.0)))?;
        let hi = row.k_min + row.values.len() as i64 - 1;
        if k < row.k_min || k > hi {
            return Err(Error::index(format!("value row of node {}", node.0), k, row.k_min, hi));
        }
        Ok(row.values[(k - row.k_min) as usize])
    }

    /// Value at an arbitrary budget, using the table's interpolation.
    pub fn value_at(&self, node: NodeId, t: f64) -> Result<f64> {
        let pos = t / self.delta_t;
        let snapped = pos.round();
        if (pos - snapped).abs() < 1e-9 {
            return self.get(node, snapped as i64);
        }
        let k = pos.floor() as i64;
        match self.interpolation {
            Interpolation::Step => self.get(node, k),
            Interpolation::Linear => {
                let frac = pos - k as f64;
                Ok((1.0 - frac) * self.get(node, k)? + frac * self.get(node, k + 1)?)
            }
        }
    }

    /// Same table restricted to rows `k <= k_budget`.
    pub fn truncated(&self, k_budget: i64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.as_ref().map(|r| {
                    let keep = (k_budget - r.k_min + 1).clamp(0, r.values.len() as i64) as usize;
                    ValueRow {
                        k_min: r.k_min,
                        values: r.values[..keep].to_vec(),
                    }
                })
            })
            .collect();
        Self {
            k_budget: k_budget.min(self.k_budget),
            rows,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub k_min: i64,
    pub actions: Vec<NodeId>,
}

/// `pi(i, k * delta_t)` for `k` in `[k_min_i, k_T]`, with the tree
/// successor as the action for every budget below `k_min_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub delta_t: f64,
    pub k_budget: i64,
    /// Threshold the policy was computed with.
    pub t_f: f64,
    pub rows: Vec<Option<PolicyRow>>,
    /// Tree successor used below each row's range.
    pub fallback: Vec<Option<NodeId>>,
}

impl PolicyTable {
    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, node: NodeId) -> Option<&PolicyRow> {
        self.rows.get(node.0).and_then(Option::as_ref)
    }

    /// Action at grid index `k`: the table entry, or the fallback below the
    /// table. Errors above `k_T` or for nodes without a policy.
    pub fn action(&self, node: NodeId, k: i64) -> Result<NodeId> {
        if k > self.k_budget {
            return Err(Error::index(
                format!("policy of node {}", node.0),
                k,
                i64::MIN,
                self.k_budget,
            ));
        }
        if let Some(row) = self.row(node) {
            if k >= row.k_min {
                return Ok(row.actions[(k - row.k_min) as usize]);
            }
        }
        self.fallback
            .get(node.0)
            .copied()
            .flatten()
            .ok_or_else(|| Error::state(format!("no action for node {} at budget index {k}", node.0)))
    }

    /// Lowest grid index at which some node's action differs from its
    /// fallback; `None` when the policy is the tree everywhere.
    pub fn first_deviation(&self) -> Option<i64> {
        self.rows
            .iter()
            .zip(&self.fallback)
            .filter_map(|(row, fb)| {
                let row = row.as_ref()?;
                row.actions
                    .iter()
                    .position(|a| Some(*a) != *fb)
                    .map(|p| row.k_min + p as i64)
            })
            .min()
    }
}
