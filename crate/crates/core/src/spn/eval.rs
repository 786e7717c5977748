//! Single-pass bottom-up evaluation in log space, and top-down ancestral
//! sampling.

use super::{NodeId, Spn, SpnError, SpnNode};
use crate::data::{Cell, ColumnKind};
use rand::Rng;
use rand_distr::StandardNormal;

impl Spn {
    /// Children-first order over the nodes reachable from the root, cached
    /// after the first call. For a valid network this covers every node
    /// exactly once, so evaluation cost is linear in the node count.
    pub fn evaluation_order(&self) -> &[NodeId] {
        self.eval_order.get_or_init(|| self.compute_order(self.root))
    }

    /// Post-order DFS from `start`; tolerates cycles and dangling children
    /// so that it can also run on networks that fail validation.
    pub(crate) fn compute_order(&self, start: NodeId) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        if start.0 >= self.nodes.len() {
            return order;
        }
        // 0 = unvisited, 1 = expanded, 2 = emitted
        let mut state = vec![0u8; self.nodes.len()];
        let mut stack = vec![(start, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                state[id.0] = 2;
                order.push(id);
                continue;
            }
            if state[id.0] != 0 {
                continue;
            }
            state[id.0] = 1;
            stack.push((id, true));
            for &c in self.nodes[id.0].children() {
                if c.0 < self.nodes.len() && state[c.0] == 0 {
                    stack.push((c, false));
                }
            }
        }
        order
    }

    fn check_row(&self, row: &[Cell]) -> Result<(), SpnError> {
        if row.len() != self.schema.len() {
            return Err(SpnError::RowArityMismatch {
                got: row.len(),
                want: self.schema.len(),
            });
        }
        for (i, (cell, meta)) in row.iter().zip(&self.schema).enumerate() {
            match (meta.kind, cell) {
                (_, Cell::Missing) => {}
                (ColumnKind::Discrete { arity }, Cell::Discrete(v)) => {
                    if *v >= arity {
                        return Err(SpnError::DiscreteOutOfRange {
                            var: i,
                            value: *v,
                            arity,
                        });
                    }
                }
                (ColumnKind::Continuous, Cell::Continuous(x)) => {
                    if !x.is_finite() {
                        return Err(SpnError::NonFiniteCell { var: i });
                    }
                }
                _ => return Err(SpnError::CellKindMismatch { var: i }),
            }
        }
        Ok(())
    }

    fn eval_into(&self, order: &[NodeId], row: &[Cell], vals: &mut Vec<f64>) -> f64 {
        vals.clear();
        vals.resize(self.nodes.len(), f64::NAN);
        for &id in order {
            let v = match &self.nodes[id.0] {
                SpnNode::Leaf { var, dist } => dist.log_density(row[var.0]),
                SpnNode::Product { children } => children.iter().map(|c| vals[c.0]).sum(),
                SpnNode::Sum {
                    children,
                    log_weights,
                } => {
                    let mut m = f64::NEG_INFINITY;
                    for (c, w) in children.iter().zip(log_weights) {
                        m = m.max(w + vals[c.0]);
                    }
                    if m == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        let s: f64 = children
                            .iter()
                            .zip(log_weights)
                            .map(|(c, w)| (w + vals[c.0] - m).exp())
                            .sum();
                        m + s.ln()
                    }
                }
            };
            vals[id.0] = v;
        }
        vals[order.last().map_or(self.root, |&n| n).0]
    }

    /// Log-density of a row. Missing cells are marginalized exactly: a leaf
    /// over a missing variable integrates to one and contributes log 1 = 0.
    pub fn log_density(&self, row: &[Cell]) -> Result<f64, SpnError> {
        self.check_row(row)?;
        let mut vals = Vec::new();
        Ok(self.eval_into(self.evaluation_order(), row, &mut vals))
    }

    /// Mean log-density over many rows; one values buffer is reused across
    /// rows. An empty iterator yields 0.
    pub fn mean_log_density<'r>(
        &self,
        rows: impl IntoIterator<Item = &'r [Cell]>,
    ) -> Result<f64, SpnError> {
        let order = self.evaluation_order();
        let mut vals = Vec::new();
        let mut total = 0.0;
        let mut n = 0usize;
        for row in rows {
            self.check_row(row)?;
            total += self.eval_into(order, row, &mut vals);
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }

    /// Draws one fully observed row by ancestral sampling: sums pick a child
    /// with probability exp(log weight), products descend into all children,
    /// leaves sample their distribution.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<Cell> {
        let mut row = vec![Cell::Missing; self.schema.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            match &self.nodes[id.0] {
                SpnNode::Leaf { var, dist } => {
                    row[var.0] = match dist {
                        super::LeafDistribution::Categorical { log_probs } => {
                            let u: f64 = rng.gen();
                            let mut acc = 0.0;
                            let mut value = log_probs.len() as u32 - 1;
                            for (i, lp) in log_probs.iter().enumerate() {
                                acc += lp.exp();
                                if u < acc {
                                    value = i as u32;
                                    break;
                                }
                            }
                            Cell::Discrete(value)
                        }
                        super::LeafDistribution::Gaussian { mean, variance } => {
                            let z: f64 = rng.sample(StandardNormal);
                            Cell::Continuous(mean + variance.sqrt() * z)
                        }
                    };
                }
                SpnNode::Product { children } => stack.extend(children.iter().copied()),
                SpnNode::Sum {
                    children,
                    log_weights,
                } => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut chosen = *children.last().expect("sum node without children");
                    for (c, w) in children.iter().zip(log_weights) {
                        acc += w.exp();
                        if u < acc {
                            chosen = *c;
                            break;
                        }
                    }
                    stack.push(chosen);
                }
            }
        }
        row
    }
}

/// Repeated evaluation of the subtree under one node; the traversal order
/// and the value buffer are computed once and reused across rows.
pub(crate) struct SubtreeEvaluator<'a> {
    spn: &'a Spn,
    order: Vec<NodeId>,
    vals: Vec<f64>,
}

impl<'a> SubtreeEvaluator<'a> {
    pub(crate) fn new(spn: &'a Spn, node: NodeId) -> SubtreeEvaluator<'a> {
        SubtreeEvaluator {
            spn,
            order: spn.compute_order(node),
            vals: Vec::new(),
        }
    }

    /// Log-density of the subtree; the row must already satisfy the schema.
    pub(crate) fn eval(&mut self, row: &[Cell]) -> f64 {
        self.spn.eval_into(&self.order, row, &mut self.vals)
    }
}
