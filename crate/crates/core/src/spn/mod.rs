//! Sum-product networks as index-addressed node arenas: sum nodes mix their
//! children, product nodes factor disjoint variable sets, leaves carry
//! univariate distributions. Evaluation marginalizes missing cells exactly
//! and runs in one pass over the nodes.
//!
//! Construction is unchecked so that structurally broken networks can be
//! built and inspected; [`Spn::validate`] reports every violation of the
//! structural invariants (acyclicity, reachability, completeness of sums,
//! decomposability of products, normalization).

pub(crate) mod eval;
mod io;

pub use io::ModelError;

use crate::data::{Cell, ColumnKind, ColumnMeta};
use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Index of a dataset column / model variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of a node in the arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of variables under a node.
pub type Scope = BTreeSet<VarId>;

/// Univariate leaf distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafDistribution {
    /// Finite support; stores log-probabilities, index = value.
    Categorical { log_probs: Vec<f64> },
    /// Normal distribution with a strictly positive variance.
    Gaussian { mean: f64, variance: f64 },
}

impl LeafDistribution {
    pub fn categorical_from_probs(probs: &[f64]) -> LeafDistribution {
        LeafDistribution::Categorical {
            log_probs: probs.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn num_free_parameters(&self) -> usize {
        match self {
            LeafDistribution::Categorical { log_probs } => log_probs.len() - 1,
            LeafDistribution::Gaussian { .. } => 2,
        }
    }

    /// Log-density of one cell; a missing cell marginalizes to log 1 = 0.
    #[inline]
    pub fn log_density(&self, cell: Cell) -> f64 {
        match (self, cell) {
            (_, Cell::Missing) => 0.0,
            (LeafDistribution::Categorical { log_probs }, Cell::Discrete(v)) => {
                log_probs[v as usize]
            }
            (LeafDistribution::Gaussian { mean, variance }, Cell::Continuous(x)) => {
                let d = x - mean;
                -0.5 * (d * d / variance + (2.0 * std::f64::consts::PI * variance).ln())
            }
            _ => panic!("leaf distribution evaluated on a cell of the wrong kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpnNode {
    Sum {
        children: Vec<NodeId>,
        log_weights: Vec<f64>,
    },
    Product {
        children: Vec<NodeId>,
    },
    Leaf {
        var: VarId,
        dist: LeafDistribution,
    },
}

impl SpnNode {
    pub fn children(&self) -> &[NodeId] {
        match self {
            SpnNode::Sum { children, .. } | SpnNode::Product { children } => children,
            SpnNode::Leaf { .. } => &[],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpnError {
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("row has {got} cells but the schema has {want} variables")]
    RowArityMismatch { got: usize, want: usize },
    #[error("value {value} out of range for discrete variable {var} (arity {arity})")]
    DiscreteOutOfRange { var: usize, value: u32, arity: u32 },
    #[error("cell kind does not match column kind for variable {var}")]
    CellKindMismatch { var: usize },
    #[error("non-finite value for variable {var}")]
    NonFiniteCell { var: usize },
}

/// One violated structural invariant, anchored to the offending node.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyNetwork,
    InvalidRoot { root: NodeId },
    DanglingChild { node: NodeId, child: NodeId },
    TooFewChildren { node: NodeId, count: usize },
    WeightCountMismatch { node: NodeId },
    UnnormalizedWeights { node: NodeId, sum: f64 },
    UnnormalizedLeafProbs { node: NodeId, sum: f64 },
    NonFiniteParameter { node: NodeId },
    LeafArityTooSmall { node: NodeId, arity: usize },
    LeafArityMismatch { node: NodeId, var: VarId },
    LeafKindMismatch { node: NodeId, var: VarId },
    NonPositiveVariance { node: NodeId, variance: f64 },
    VarOutOfRange { node: NodeId, var: VarId },
    Cycle { node: NodeId },
    Unreachable { node: NodeId },
    SumScopeMismatch { node: NodeId },
    ProductScopeOverlap { node: NodeId },
    RootScopeIncomplete { missing: Vec<VarId> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyNetwork => write!(f, "network has no nodes"),
            InvalidRoot { root } => write!(f, "root id {root} is out of range"),
            DanglingChild { node, child } => {
                write!(f, "node {node} references unknown child {child}")
            }
            TooFewChildren { node, count } => {
                write!(f, "node {node} has {count} children, need at least 2")
            }
            WeightCountMismatch { node } => {
                write!(f, "sum node {node} has mismatched child/weight counts")
            }
            UnnormalizedWeights { node, sum } => {
                write!(f, "sum node {node} weights sum to {sum}, expected 1")
            }
            UnnormalizedLeafProbs { node, sum } => {
                write!(f, "leaf {node} probabilities sum to {sum}, expected 1")
            }
            NonFiniteParameter { node } => write!(f, "node {node} has a non-finite parameter"),
            LeafArityTooSmall { node, arity } => {
                write!(f, "leaf {node} has arity {arity}, need at least 2")
            }
            LeafArityMismatch { node, var } => {
                write!(f, "leaf {node} arity differs from column {var}")
            }
            LeafKindMismatch { node, var } => {
                write!(f, "leaf {node} distribution kind differs from column {var}")
            }
            NonPositiveVariance { node, variance } => {
                write!(f, "leaf {node} has non-positive variance {variance}")
            }
            VarOutOfRange { node, var } => {
                write!(f, "leaf {node} references variable {var} outside the schema")
            }
            Cycle { node } => write!(f, "node {node} lies on a cycle"),
            Unreachable { node } => write!(f, "node {node} is unreachable from the root"),
            SumScopeMismatch { node } => {
                write!(f, "sum node {node} children have differing scopes")
            }
            ProductScopeOverlap { node } => {
                write!(f, "product node {node} children have overlapping scopes")
            }
            RootScopeIncomplete { missing } => {
                write!(f, "root scope misses {} schema variable(s)", missing.len())
            }
        }
    }
}

/// Outcome of [`Spn::validate`]: empty means the network is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

const NORMALIZATION_TOL: f64 = 1e-9;

/// A sum-product network: node arena, root, and the column schema it is
/// defined over. Immutable after construction; evaluation and sampling are
/// pure reads, safe to share across threads.
#[derive(Debug, Clone)]
pub struct Spn {
    nodes: Vec<SpnNode>,
    root: NodeId,
    schema: Vec<ColumnMeta>,
    eval_order: OnceLock<Vec<NodeId>>,
}

impl Spn {
    /// Assembles a network without validating it.
    pub fn from_parts(nodes: Vec<SpnNode>, root: NodeId, schema: Vec<ColumnMeta>) -> Spn {
        Spn {
            nodes,
            root,
            schema,
            eval_order: OnceLock::new(),
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Result<&SpnNode, SpnError> {
        self.nodes.get(id.0).ok_or(SpnError::UnknownNode(id.0))
    }

    pub fn nodes(&self) -> &[SpnNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn schema(&self) -> &[ColumnMeta] {
        &self.schema
    }

    pub fn n_vars(&self) -> usize {
        self.schema.len()
    }

    /// Scope of a node: its variable for a leaf, the union of child scopes
    /// for a product, the first child's scope for a sum (validation enforces
    /// that all sum children agree).
    pub fn scope_of(&self, id: NodeId) -> Result<Scope, SpnError> {
        self.node(id)?;
        let order = self.compute_order(id);
        let mut scopes: Vec<Option<Scope>> = vec![None; self.nodes.len()];
        for &n in &order {
            let scope = match &self.nodes[n.0] {
                SpnNode::Leaf { var, .. } => BTreeSet::from([*var]),
                SpnNode::Sum { children, .. } => children
                    .first()
                    .and_then(|c| scopes.get(c.0).cloned().flatten())
                    .unwrap_or_default(),
                SpnNode::Product { children } => {
                    let mut s = BTreeSet::new();
                    for c in children {
                        if let Some(Some(cs)) = scopes.get(c.0) {
                            s.extend(cs.iter().copied());
                        }
                    }
                    s
                }
            };
            scopes[n.0] = Some(scope);
        }
        Ok(scopes[id.0].take().unwrap_or_default())
    }

    /// Count of free parameters: `c - 1` per sum node with `c` children,
    /// `arity - 1` per categorical leaf, 2 per Gaussian leaf.
    pub fn num_free_parameters(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                SpnNode::Sum { children, .. } => children.len().saturating_sub(1),
                SpnNode::Product { .. } => 0,
                SpnNode::Leaf { dist, .. } => dist.num_free_parameters(),
            })
            .sum()
    }

    /// Checks every structural invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.nodes.is_empty() {
            return ValidationReport {
                violations: vec![Violation::EmptyNetwork],
            };
        }
        if self.root.0 >= self.nodes.len() {
            return ValidationReport {
                violations: vec![Violation::InvalidRoot { root: self.root }],
            };
        }

        let mut well_formed = true;
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i);
            for &c in node.children() {
                if c.0 >= self.nodes.len() {
                    v.push(Violation::DanglingChild { node: id, child: c });
                    well_formed = false;
                }
            }
            match node {
                SpnNode::Sum {
                    children,
                    log_weights,
                } => {
                    if children.len() < 2 {
                        v.push(Violation::TooFewChildren {
                            node: id,
                            count: children.len(),
                        });
                    }
                    if log_weights.len() != children.len() {
                        v.push(Violation::WeightCountMismatch { node: id });
                        well_formed = false;
                        continue;
                    }
                    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
                        v.push(Violation::NonFiniteParameter { node: id });
                        continue;
                    }
                    let sum: f64 = log_weights.iter().map(|w| w.exp()).sum();
                    if (sum - 1.0).abs() > NORMALIZATION_TOL {
                        v.push(Violation::UnnormalizedWeights { node: id, sum });
                    }
                }
                SpnNode::Product { children } => {
                    if children.len() < 2 {
                        v.push(Violation::TooFewChildren {
                            node: id,
                            count: children.len(),
                        });
                    }
                }
                SpnNode::Leaf { var, dist } => {
                    let column = if var.0 < self.schema.len() {
                        Some(&self.schema[var.0])
                    } else {
                        v.push(Violation::VarOutOfRange { node: id, var: *var });
                        None
                    };
                    match dist {
                        LeafDistribution::Categorical { log_probs } => {
                            if log_probs.len() < 2 {
                                v.push(Violation::LeafArityTooSmall {
                                    node: id,
                                    arity: log_probs.len(),
                                });
                            }
                            if log_probs.iter().any(|p| !p.is_finite()) {
                                v.push(Violation::NonFiniteParameter { node: id });
                            } else {
                                let sum: f64 = log_probs.iter().map(|p| p.exp()).sum();
                                if (sum - 1.0).abs() > NORMALIZATION_TOL {
                                    v.push(Violation::UnnormalizedLeafProbs { node: id, sum });
                                }
                            }
                            match column.map(|m| m.kind) {
                                Some(ColumnKind::Discrete { arity }) => {
                                    if log_probs.len() != arity as usize {
                                        v.push(Violation::LeafArityMismatch {
                                            node: id,
                                            var: *var,
                                        });
                                    }
                                }
                                Some(ColumnKind::Continuous) => {
                                    v.push(Violation::LeafKindMismatch { node: id, var: *var });
                                }
                                None => {}
                            }
                        }
                        LeafDistribution::Gaussian { mean, variance } => {
                            if !mean.is_finite() || !variance.is_finite() {
                                v.push(Violation::NonFiniteParameter { node: id });
                            } else if *variance <= 0.0 {
                                v.push(Violation::NonPositiveVariance {
                                    node: id,
                                    variance: *variance,
                                });
                            }
                            if let Some(ColumnKind::Discrete { .. }) = column.map(|m| m.kind) {
                                v.push(Violation::LeafKindMismatch { node: id, var: *var });
                            }
                        }
                    }
                }
            }
        }

        // Reachability and cycle detection: colored DFS from the root.
        // 0 = unvisited, 1 = in progress, 2 = done.
        let mut state = vec![0u8; self.nodes.len()];
        let mut cycle_nodes = Vec::new();
        let mut stack: Vec<(NodeId, bool)> = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                state[id.0] = 2;
                continue;
            }
            if state[id.0] != 0 {
                continue;
            }
            state[id.0] = 1;
            stack.push((id, true));
            for &c in self.nodes[id.0].children() {
                if c.0 >= self.nodes.len() {
                    continue;
                }
                match state[c.0] {
                    0 => stack.push((c, false)),
                    1 => cycle_nodes.push(c),
                    _ => {}
                }
            }
        }
        cycle_nodes.sort_unstable();
        cycle_nodes.dedup();
        let acyclic = cycle_nodes.is_empty();
        for n in cycle_nodes {
            v.push(Violation::Cycle { node: n });
        }
        for (i, &s) in state.iter().enumerate() {
            if s == 0 {
                v.push(Violation::Unreachable { node: NodeId(i) });
            }
        }

        // Scope semantics need a well-formed acyclic graph underneath.
        if well_formed && acyclic {
            self.check_scopes(&mut v);
        }

        ValidationReport { violations: v }
    }

    /// Completeness, decomposability, and root coverage, over bit-vector
    /// scopes to stay cheap on wide schemas.
    fn check_scopes(&self, v: &mut Vec<Violation>) {
        let words = self.schema.len().div_ceil(64);
        let order = self.evaluation_order();
        let mut scopes: Vec<Vec<u64>> = vec![Vec::new(); self.nodes.len()];
        let mut counts: Vec<u32> = vec![0; self.nodes.len()];
        for &id in order {
            match &self.nodes[id.0] {
                SpnNode::Leaf { var, .. } => {
                    let mut s = vec![0u64; words];
                    if var.0 < self.schema.len() {
                        s[var.0 / 64] |= 1 << (var.0 % 64);
                    }
                    counts[id.0] = 1;
                    scopes[id.0] = s;
                }
                SpnNode::Sum { children, .. } => {
                    let first = &scopes[children[0].0];
                    if children[1..]
                        .iter()
                        .any(|c| scopes[c.0] != *first)
                    {
                        v.push(Violation::SumScopeMismatch { node: id });
                    }
                    counts[id.0] = counts[children[0].0];
                    scopes[id.0] = scopes[children[0].0].clone();
                }
                SpnNode::Product { children } => {
                    let mut s = vec![0u64; words];
                    let mut total = 0u32;
                    for c in children {
                        for (acc, w) in s.iter_mut().zip(&scopes[c.0]) {
                            *acc |= w;
                        }
                        total += counts[c.0];
                    }
                    let union_count: u32 = s.iter().map(|w| w.count_ones()).sum();
                    if union_count != total {
                        v.push(Violation::ProductScopeOverlap { node: id });
                    }
                    counts[id.0] = union_count;
                    scopes[id.0] = s;
                }
            }
        }
        let root_scope = &scopes[self.root.0];
        let missing: Vec<VarId> = (0..self.schema.len())
            .filter(|&i| root_scope[i / 64] & (1 << (i % 64)) == 0)
            .map(VarId)
            .collect();
        if !missing.is_empty() {
            v.push(Violation::RootScopeIncomplete { missing });
        }
    }

    /// Rebuilds the arena keeping only nodes reachable from the root, in
    /// topological (children-first) order.
    pub fn pruned(&self) -> Spn {
        let order = self.compute_order(self.root);
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old.0] = new;
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let mut n = self.nodes[old.0].clone();
                match &mut n {
                    SpnNode::Sum { children, .. } | SpnNode::Product { children } => {
                        for c in children.iter_mut() {
                            *c = NodeId(remap[c.0]);
                        }
                    }
                    SpnNode::Leaf { .. } => {}
                }
                n
            })
            .collect();
        Spn::from_parts(nodes, NodeId(remap[self.root.0]), self.schema.clone())
    }
}

/// Incremental arena construction for the learners: push children first,
/// then their parents, and finish with the root.
#[derive(Debug, Default)]
pub struct SpnBuilder {
    nodes: Vec<SpnNode>,
}

impl SpnBuilder {
    pub fn new() -> SpnBuilder {
        SpnBuilder::default()
    }

    pub fn leaf(&mut self, var: VarId, dist: LeafDistribution) -> NodeId {
        self.push(SpnNode::Leaf { var, dist })
    }

    pub fn product(&mut self, children: Vec<NodeId>) -> NodeId {
        self.push(SpnNode::Product { children })
    }

    pub fn sum(&mut self, children: Vec<NodeId>, log_weights: Vec<f64>) -> NodeId {
        self.push(SpnNode::Sum {
            children,
            log_weights,
        })
    }

    pub fn push(&mut self, node: SpnNode) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(node);
        id
    }

    pub fn finish(self, root: NodeId, schema: Vec<ColumnMeta>) -> Spn {
        Spn::from_parts(self.nodes, root, schema)
    }
}
