//! Adaptive routing on stochastic graphs.
//!
//! The nominal solver maximises `E[f(T - X)]` over adaptive routing
//! strategies when arc-cost distributions are known; the robust solver
//! maximises the worst case over ambiguity sets built from interval bounds
//! on piecewise-affine statistics. Both work on a uniform budget grid and
//! share the same three-phase label-setting structure:
//!
//! 1. a shortest-path tree on (worst-case) mean costs and a threshold `T_f`
//!    below which following the tree is optimal,
//! 2. breadth-first initialisation of all rows below `T_f` along the tree,
//! 3. row-by-row maximisation over successors up to the budget `T`.

pub mod ambiguity;
pub mod convolution;
pub mod error;
pub mod experiment;
pub mod hull;
pub mod inner;
pub mod io;
pub mod lp;
pub mod model;
pub mod nominal;
pub mod preprocess;
pub mod robust;
pub mod simulate;
pub mod tables;

pub use error::{Error, Result};
pub use model::{Arc, ArcId, BudgetGrid, CellRange, Graph, GridDistribution, NodeId, RiskFunction};
pub use tables::{Interpolation, PolicyTable, ValueTable};
