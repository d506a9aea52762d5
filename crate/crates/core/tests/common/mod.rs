//! Random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_routing::{Arc, Graph, GridDistribution, NodeId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random pmf on `n` cells; about a third of the instances are sparse.
pub fn random_weights(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let sparse = r.random_bool(0.3);
    let mut w: Vec<f64> = (0..n)
        .map(|_| if sparse && r.random_bool(0.5) { 0.0 } else { r.random::<f64>() + 1e-3 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        let i = r.random_range(0..n);
        w[i] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

pub struct Instance {
    pub graph: Graph,
    pub dists: Vec<GridDistribution>,
}

/// Random graph on at most `max_nodes` nodes and 10 arcs where every node
/// reaches the destination; supports of at most 8 cells.
pub fn random_instance(r: &mut ChaCha8Rng, max_nodes: usize, dt: f64) -> Instance {
    let n = r.random_range(2..=max_nodes);
    let d = n - 1;
    let mut pairs: Vec<(usize, usize)> = (0..d).map(|i| (i, r.random_range(i + 1..n))).collect();
    let extra = r.random_range(0..=(10 - pairs.len()));
    for _ in 0..extra * 3 {
        if pairs.len() >= 10 {
            break;
        }
        let (i, j) = (r.random_range(0..d), r.random_range(0..n));
        if i != j && !pairs.contains(&(i, j)) {
            pairs.push((i, j));
        }
    }
    let mut arcs = Vec::new();
    let mut dists = Vec::new();
    for (i, j) in pairs {
        let lo = r.random_range(1..=4);
        let len = r.random_range(1..=8);
        let mut w = random_weights(r, len);
        if w[len - 1] == 0.0 {
            w[len - 1] = 0.1;
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
        }
        arcs.push(Arc {
            tail: NodeId(i),
            head: NodeId(j),
            delta_inf: lo as f64 * dt,
            delta_sup: (lo + len as i64 - 1) as f64 * dt,
        });
        dists.push(GridDistribution::new(dt, lo, w).unwrap());
    }
    let names = (0..n).map(|i| format!("v{i}")).collect();
    Instance {
        graph: Graph::new(names, arcs, NodeId(0), NodeId(d)).unwrap(),
        dists,
    }
}
