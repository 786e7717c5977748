//! Sum-product network toolkit: exact linear-time inference over
//! heterogeneous data with missing values, a greedy structure learner built
//! on validated two-cluster splits and independence-based variable
//! partitioning, and a Pareto-front search baseline over degrees of freedom
//! versus validation likelihood.

pub mod data;
pub mod graph;
pub mod learn;
pub mod spn;
pub mod stats;

pub use data::{
    generate_synthetic, load_benchmark_triplet, load_mixed_csv, split_rows, Cell, ColumnKind,
    ColumnMeta, DataError, DataSlice, Dataset, SynthSpec, Synthetic,
};
pub use spn::{
    LeafDistribution, ModelError, NodeId, Scope, Spn, SpnBuilder, SpnError, SpnNode,
    ValidationReport, VarId, Violation,
};
