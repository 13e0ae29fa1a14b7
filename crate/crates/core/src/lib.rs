//! Discrete causal inference toolkit.

pub mod assignment;
pub mod bandits;
pub mod cli;
pub mod data;
pub mod discovery;
pub mod estimation;
pub mod graph;
pub mod missing;
pub mod scm;
pub mod table;
pub mod transport;

pub use assignment::Assignment;
pub use data::{Column, DiscreteDataset};
pub use graph::{CausalGraph, GraphDoc, GraphError, NodeKind};
pub use scm::DiscreteScm;
pub use table::ProbTable;
