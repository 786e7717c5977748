//! Random production-rule search over structures, keeping a Pareto front of
//! (degrees of freedom, validation log-likelihood). Each step picks a
//! factorized node and either partitions its scope or replaces it with a
//! two-component mixture over a random row bipartition; dominated models are
//! dropped from the front, and the search returns the member with the
//! highest validation likelihood. Initializing the front with a learned
//! model gives the hybrid variant.

use super::minispn::factorized_model;
use super::{LearnConfig, LearnError};
use crate::data::{Cell, ColumnKind, Dataset};
use crate::spn::eval::SubtreeEvaluator;
use crate::spn::{LeafDistribution, NodeId, Spn, SpnNode, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct ParetoConfig {
    pub iterations: usize,
    pub expansions_per_iteration: usize,
    pub seed: u64,
    /// Refit leaf parameters on the training rows routed to the rewritten
    /// node; otherwise the existing parameters are copied.
    pub refit_after_rule: bool,
    pub deadline: Option<Instant>,
}

impl Default for ParetoConfig {
    fn default() -> ParetoConfig {
        ParetoConfig {
            iterations: 50,
            expansions_per_iteration: 10,
            seed: 0,
            refit_after_rule: true,
            deadline: None,
        }
    }
}

/// A scored model: degrees of freedom and mean validation log-likelihood.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub spn: Spn,
    pub dof: usize,
    pub valid_ll: f64,
}

impl CandidateModel {
    pub fn score(spn: Spn, valid: &Dataset) -> CandidateModel {
        let dof = spn.num_free_parameters();
        let valid_ll = spn
            .mean_log_density(valid.rows())
            .expect("validation rows must match the model schema");
        CandidateModel { spn, dof, valid_ll }
    }
}

/// `a` dominates `b` when it is no worse on both objectives and strictly
/// better on at least one.
pub fn dominates(a: &CandidateModel, b: &CandidateModel) -> bool {
    a.dof <= b.dof && a.valid_ll >= b.valid_ll && (a.dof < b.dof || a.valid_ll > b.valid_ll)
}

/// Antichain of candidate models under [`dominates`], in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParetoSet {
    models: Vec<CandidateModel>,
}

impl ParetoSet {
    pub fn new() -> ParetoSet {
        ParetoSet::default()
    }

    pub fn models(&self) -> &[CandidateModel] {
        &self.models
    }

    /// Inserts `m` unless a member dominates it; members dominated by `m`
    /// are removed. Returns whether `m` entered the set.
    pub fn insert(&mut self, m: CandidateModel) -> bool {
        if self.models.iter().any(|x| dominates(x, &m)) {
            return false;
        }
        self.models.retain(|x| !dominates(&m, x));
        self.models.push(m);
        debug_assert!(self.is_antichain());
        true
    }

    pub fn is_antichain(&self) -> bool {
        for (i, a) in self.models.iter().enumerate() {
            for b in &self.models[i + 1..] {
                if dominates(a, b) || dominates(b, a) {
                    return false;
                }
            }
        }
        true
    }

    /// Highest validation likelihood; ties prefer fewer degrees of freedom,
    /// then the earlier-inserted member.
    pub fn best(&self) -> Option<&CandidateModel> {
        let mut best: Option<&CandidateModel> = None;
        for m in &self.models {
            let better = match best {
                None => true,
                Some(b) => {
                    m.valid_ll > b.valid_ll || (m.valid_ll == b.valid_ll && m.dof < b.dof)
                }
            };
            if better {
                best = Some(m);
            }
        }
        best
    }
}

/// One front member snapshot for the trace output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontPoint {
    pub iteration: usize,
    pub dof: usize,
    pub valid_ll: f64,
}

#[derive(Clone, Copy)]
enum Rule {
    Partition,
    Mixture,
}

/// True for the nodes the production rules may target: leaves, and products
/// whose children are all leaves.
fn is_factorized(spn: &Spn, id: NodeId) -> bool {
    match &spn.nodes()[id.0] {
        SpnNode::Leaf { .. } => true,
        SpnNode::Product { children } => children
            .iter()
            .all(|c| matches!(spn.nodes()[c.0], SpnNode::Leaf { .. })),
        SpnNode::Sum { .. } => false,
    }
}

/// Training rows reaching `node`: rows descend every product branch and, at
/// each sum on the path, follow the child with the highest membership score
/// (log weight plus child log-density, ties to the lower child index).
fn route_rows(spn: &Spn, node: NodeId, train: &Dataset) -> Vec<usize> {
    // parent walk; learner output is a tree, so the path is unique
    let mut parent = vec![None; spn.node_count()];
    for (i, n) in spn.nodes().iter().enumerate() {
        for c in n.children() {
            parent[c.0].get_or_insert(NodeId(i));
        }
    }
    let mut path = vec![node];
    let mut cur = node;
    while let Some(p) = parent[cur.0] {
        path.push(p);
        cur = p;
    }
    path.reverse();

    let mut rows: Vec<usize> = (0..train.n_rows()).collect();
    for (i, &step) in path.iter().enumerate() {
        if rows.is_empty() {
            break;
        }
        if let SpnNode::Sum {
            children,
            log_weights,
        } = &spn.nodes()[step.0]
        {
            let next = path[i + 1];
            let branch = children.iter().position(|c| *c == next).expect("path child");
            let mut evals: Vec<SubtreeEvaluator> = children
                .iter()
                .map(|&c| SubtreeEvaluator::new(spn, c))
                .collect();
            rows.retain(|&r| {
                let row = train.row(r);
                let mut best_k = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (k, ev) in evals.iter_mut().enumerate() {
                    let s = log_weights[k] + ev.eval(row);
                    if s > best_score {
                        best_score = s;
                        best_k = k;
                    }
                }
                best_k == branch
            });
        }
    }
    rows
}

struct LeafFitter<'a> {
    train: &'a Dataset,
    laplace: f64,
    variance_floor: f64,
}

impl LeafFitter<'_> {
    /// Smoothed univariate fit over the given training rows.
    fn fit(&self, var: VarId, rows: &[usize]) -> LeafDistribution {
        match self.train.schema()[var.0].kind {
            ColumnKind::Discrete { arity } => {
                let mut counts = vec![0.0f64; arity as usize];
                let mut n_obs = 0.0;
                for &r in rows {
                    if let Cell::Discrete(v) = self.train.cell(r, var.0) {
                        counts[v as usize] += 1.0;
                        n_obs += 1.0;
                    }
                }
                let denom = n_obs + self.laplace * arity as f64;
                LeafDistribution::Categorical {
                    log_probs: counts
                        .iter()
                        .map(|c| ((c + self.laplace) / denom).ln())
                        .collect(),
                }
            }
            ColumnKind::Continuous => {
                let mut n = 0.0;
                let mut mean = 0.0;
                let mut m2 = 0.0;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &r in rows {
                    if let Cell::Continuous(x) = self.train.cell(r, var.0) {
                        n += 1.0;
                        let d = x - mean;
                        mean += d / n;
                        m2 += d * (x - mean);
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
                let range = hi - lo;
                let floor = if range.is_finite() && range > 0.0 {
                    self.variance_floor * range * range
                } else {
                    self.variance_floor
                };
                if n == 0.0 {
                    LeafDistribution::Gaussian {
                        mean: 0.0,
                        variance: 1.0f64.max(floor),
                    }
                } else {
                    LeafDistribution::Gaussian {
                        mean,
                        variance: (m2 / n).max(floor),
                    }
                }
            }
        }
    }
}

/// Leaf parameters currently stored under a factorized node, keyed by
/// variable.
fn existing_leaves(spn: &Spn, target: NodeId) -> Vec<(VarId, LeafDistribution)> {
    let mut out = Vec::new();
    let mut stack = vec![target];
    while let Some(id) = stack.pop() {
        match &spn.nodes()[id.0] {
            SpnNode::Leaf { var, dist } => out.push((*var, dist.clone())),
            node => stack.extend(node.children().iter().copied()),
        }
    }
    out.sort_by_key(|(v, _)| *v);
    out
}

/// Appends a factorized fit over `vars` and returns its root id.
fn push_factorized(
    nodes: &mut Vec<SpnNode>,
    vars: &[VarId],
    leaf_for: &mut impl FnMut(VarId) -> LeafDistribution,
) -> NodeId {
    let leaf_ids: Vec<NodeId> = vars
        .iter()
        .map(|&v| {
            let id = NodeId(nodes.len());
            nodes.push(SpnNode::Leaf {
                var: v,
                dist: leaf_for(v),
            });
            id
        })
        .collect();
    if leaf_ids.len() == 1 {
        leaf_ids[0]
    } else {
        let id = NodeId(nodes.len());
        nodes.push(SpnNode::Product { children: leaf_ids });
        id
    }
}

/// Splits `items` indices in two by a fair coin, moving one element when a
/// side comes up empty.
fn random_bipartition(n: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut side: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    if n >= 2 {
        if side.iter().all(|&s| s) {
            side[rng.gen_range(0..n)] = false;
        } else if side.iter().all(|&s| !s) {
            side[rng.gen_range(0..n)] = true;
        }
    }
    side
}

/// Applies one random production rule to a random factorized node and
/// rescores the result. Rules that cannot apply (single-variable partition,
/// mixture over fewer than two routed rows) return the model unchanged.
pub fn apply_production(
    m: &CandidateModel,
    train: &Dataset,
    valid: &Dataset,
    fit_config: &LearnConfig,
    config: &ParetoConfig,
    rng: &mut ChaCha8Rng,
) -> CandidateModel {
    let spn = &m.spn;
    let targets: Vec<NodeId> = (0..spn.node_count())
        .map(NodeId)
        .filter(|&id| is_factorized(spn, id))
        .collect();
    if targets.is_empty() {
        return m.clone();
    }
    let target = targets[rng.gen_range(0..targets.len())];
    let rule = if rng.gen() { Rule::Partition } else { Rule::Mixture };

    let fitter = LeafFitter {
        train,
        laplace: fit_config.laplace,
        variance_floor: fit_config.variance_floor,
    };

    let rewritten = match rule {
        Rule::Partition => partition_at(spn, target, train, &fitter, config, rng),
        Rule::Mixture => mixture_at(spn, target, train, &fitter, config, rng),
    };
    match rewritten {
        Some(new_spn) => {
            debug_assert!(new_spn.validate().is_valid());
            CandidateModel::score(new_spn, valid)
        }
        None => m.clone(),
    }
}

fn partition_at(
    spn: &Spn,
    target: NodeId,
    train: &Dataset,
    fitter: &LeafFitter,
    config: &ParetoConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Spn> {
    let scope: Vec<VarId> = spn.scope_of(target).expect("target exists").into_iter().collect();
    if scope.len() < 2 {
        return None;
    }
    let side = random_bipartition(scope.len(), rng);
    let group0: Vec<VarId> = scope.iter().zip(&side).filter(|(_, &s)| !s).map(|(v, _)| *v).collect();
    let group1: Vec<VarId> = scope.iter().zip(&side).filter(|(_, &s)| s).map(|(v, _)| *v).collect();

    let old = existing_leaves(spn, target);
    let routed;
    let mut leaf_for: Box<dyn FnMut(VarId) -> LeafDistribution> = if config.refit_after_rule {
        routed = route_rows(spn, target, train);
        Box::new(move |v| fitter.fit(v, &routed))
    } else {
        Box::new(move |v| {
            old.iter()
                .find(|(ov, _)| *ov == v)
                .map(|(_, d)| d.clone())
                .expect("factorized node carries a leaf per scope variable")
        })
    };

    let mut nodes = spn.nodes().to_vec();
    let sub0 = push_factorized(&mut nodes, &group0, &mut leaf_for);
    let sub1 = push_factorized(&mut nodes, &group1, &mut leaf_for);
    nodes[target.0] = SpnNode::Product {
        children: vec![sub0, sub1],
    };
    Some(Spn::from_parts(nodes, spn.root(), spn.schema().to_vec()).pruned())
}

fn mixture_at(
    spn: &Spn,
    target: NodeId,
    train: &Dataset,
    fitter: &LeafFitter,
    config: &ParetoConfig,
    rng: &mut ChaCha8Rng,
) -> Option<Spn> {
    let scope: Vec<VarId> = spn.scope_of(target).expect("target exists").into_iter().collect();
    let routed = route_rows(spn, target, train);
    if routed.len() < 2 {
        return None;
    }
    let side = random_bipartition(routed.len(), rng);
    let part0: Vec<usize> = routed.iter().zip(&side).filter(|(_, &s)| !s).map(|(r, _)| *r).collect();
    let part1: Vec<usize> = routed.iter().zip(&side).filter(|(_, &s)| s).map(|(r, _)| *r).collect();

    let laplace = fitter.laplace;
    let n = routed.len() as f64;
    let log_w = |len: usize| ((len as f64 + laplace) / (n + 2.0 * laplace)).ln();

    let old = existing_leaves(spn, target);
    let mut nodes = spn.nodes().to_vec();
    let component = |part: &[usize], nodes: &mut Vec<SpnNode>| {
        if config.refit_after_rule {
            push_factorized(nodes, &scope, &mut |v| fitter.fit(v, part))
        } else {
            push_factorized(nodes, &scope, &mut |v| {
                old.iter()
                    .find(|(ov, _)| *ov == v)
                    .map(|(_, d)| d.clone())
                    .expect("factorized node carries a leaf per scope variable")
            })
        }
    };
    let c0 = component(&part0, &mut nodes);
    let c1 = component(&part1, &mut nodes);
    nodes[target.0] = SpnNode::Sum {
        children: vec![c0, c1],
        log_weights: vec![log_w(part0.len()), log_w(part1.len())],
    };
    Some(Spn::from_parts(nodes, spn.root(), spn.schema().to_vec()).pruned())
}

/// Pareto-front search. The seed set holds the factorized model plus the
/// optional initializer; each iteration expands randomly chosen members and
/// merges the results back into the front. Returns the best member by
/// validation likelihood.
pub fn pareto_search(
    train: &Dataset,
    valid: &Dataset,
    config: &ParetoConfig,
    fit_config: &LearnConfig,
    init: Option<Spn>,
) -> Result<Spn, LearnError> {
    pareto_search_traced(train, valid, config, fit_config, init, None)
}

/// [`pareto_search`] with an optional per-iteration front trace.
pub fn pareto_search_traced(
    train: &Dataset,
    valid: &Dataset,
    config: &ParetoConfig,
    fit_config: &LearnConfig,
    init: Option<Spn>,
    mut trace: Option<&mut Vec<FrontPoint>>,
) -> Result<Spn, LearnError> {
    if train.n_rows() == 0 {
        return Err(LearnError::EmptyTrainingData);
    }
    if train.schema() != valid.schema()
        || init.as_ref().is_some_and(|s| s.schema() != train.schema())
    {
        return Err(LearnError::SchemaMismatch);
    }

    let mut set = ParetoSet::new();
    set.insert(CandidateModel::score(
        factorized_model(train, fit_config),
        valid,
    ));
    if let Some(init) = init {
        set.insert(CandidateModel::score(init, valid));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let snapshot = |iteration: usize, set: &ParetoSet, trace: &mut Option<&mut Vec<FrontPoint>>| {
        if let Some(t) = trace.as_deref_mut() {
            for m in set.models() {
                t.push(FrontPoint {
                    iteration,
                    dof: m.dof,
                    valid_ll: m.valid_ll,
                });
            }
        }
    };
    snapshot(0, &set, &mut trace);

    for iteration in 0..config.iterations {
        if config.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(LearnError::Timeout);
        }
        let picks: Vec<usize> = (0..config.expansions_per_iteration)
            .map(|_| rng.gen_range(0..set.models().len()))
            .collect();
        let expanded: Vec<CandidateModel> = picks
            .iter()
            .map(|&p| apply_production(&set.models()[p], train, valid, fit_config, config, &mut rng))
            .collect();
        for m in expanded {
            set.insert(m);
        }
        snapshot(iteration + 1, &set, &mut trace);
    }

    Ok(set.best().expect("set holds at least the seed model").spn.clone())
}
