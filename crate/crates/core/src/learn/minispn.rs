//! Greedy recursive structure learner. Each data slice first tries a
//! two-cluster instance split (hard EM, single run, random init), accepted
//! only when the two-component mixture scores a strictly higher validation
//! likelihood than the factorized fit. Only after the clustering step fails
//! does the slice fall back to a variable partition: pairwise G-tests over
//! pairwise-complete rows build a dependency graph whose connected
//! components become product children. Slices that get too small, or that
//! stay connected, end as factorized products of smoothed leaves.

use super::{DecisionLog, DecisionRecord, LearnConfig, LearnError, SliceContext, SplitKind};
use crate::data::{Cell, ColumnKind, ColumnMeta, DataSlice, Dataset};
use crate::graph::connected_components;
use crate::spn::{LeafDistribution, NodeId, Spn, SpnBuilder};
use crate::stats::{log_add_exp, pairwise_g_test};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Deep accepted-split chains recurse once per level; run the recursion on a
// thread with a stack sized for the worst case.
const LEARN_STACK_BYTES: usize = 256 << 20;

/// Learns a tree-structured network over the training data, gating every
/// instance split on the validation data.
pub fn learn(train: &Dataset, valid: &Dataset, config: &LearnConfig) -> Result<Spn, LearnError> {
    learn_with_log(train, valid, config).map(|(spn, _)| spn)
}

/// Same as [`learn`], also returning the per-split decision log.
pub fn learn_with_log(
    train: &Dataset,
    valid: &Dataset,
    config: &LearnConfig,
) -> Result<(Spn, DecisionLog), LearnError> {
    if train.schema() != valid.schema() {
        return Err(LearnError::SchemaMismatch);
    }
    if train.n_rows() == 0 {
        return Err(LearnError::EmptyTrainingData);
    }
    std::thread::scope(|scope| {
        std::thread::Builder::new()
            .name("minispn-learn".into())
            .stack_size(LEARN_STACK_BYTES)
            .spawn_scoped(scope, || {
                let mut builder = SpnBuilder::new();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                let mut log = DecisionLog::default();
                let ctx = SliceContext::new(train.full_slice(), valid.full_slice());
                let root = learn_slice(&mut builder, ctx, config, &mut rng, &mut log)?;
                Ok((builder.finish(root, train.schema().to_vec()), log))
            })
            .expect("failed to spawn the learner thread")
            .join()
            .expect("learner thread panicked")
    })
}

fn learn_slice(
    builder: &mut SpnBuilder,
    ctx: SliceContext<'_>,
    config: &LearnConfig,
    rng: &mut ChaCha8Rng,
    log: &mut DecisionLog,
) -> Result<NodeId, LearnError> {
    if config.past_deadline() {
        return Err(LearnError::Timeout);
    }
    let rows = ctx.train.n_rows();
    let vars = ctx.train.n_vars();
    if rows < config.min_instances || vars == 1 {
        return Ok(fit_factorized(builder, &ctx.train, config));
    }

    match try_instance_split(&ctx, config, rng) {
        SplitOutcome::Accept {
            assignments,
            log_weights,
            fits,
            ll_factorized,
            ll_mixture,
        } => {
            log.records.push(DecisionRecord {
                kind: SplitKind::Cluster,
                rows,
                vars,
                ll_factorized: Some(ll_factorized),
                ll_mixture: Some(ll_mixture),
                accepted: true,
            });
            let part0: Vec<usize> = (0..rows).filter(|&r| assignments[r] == 0).collect();
            let part1: Vec<usize> = (0..rows).filter(|&r| assignments[r] == 1).collect();
            // route each validation row down the branch that explains it best
            let mut valid0 = Vec::new();
            let mut valid1 = Vec::new();
            for r in 0..ctx.valid.n_rows() {
                let s0 = log_weights[0] + row_loglik(&ctx.valid, r, &fits[0]);
                let s1 = log_weights[1] + row_loglik(&ctx.valid, r, &fits[1]);
                if s1 > s0 {
                    valid1.push(r);
                } else {
                    valid0.push(r);
                }
            }
            let child0 = learn_slice(
                builder,
                SliceContext::new(ctx.train.with_rows(&part0), ctx.valid.with_rows(&valid0)),
                config,
                rng,
                log,
            )?;
            let child1 = learn_slice(
                builder,
                SliceContext::new(ctx.train.with_rows(&part1), ctx.valid.with_rows(&valid1)),
                config,
                rng,
                log,
            )?;
            Ok(builder.sum(vec![child0, child1], log_weights.to_vec()))
        }
        SplitOutcome::Reject {
            ll_factorized,
            ll_mixture,
        } => {
            log.records.push(DecisionRecord {
                kind: SplitKind::Cluster,
                rows,
                vars,
                ll_factorized,
                ll_mixture,
                accepted: false,
            });
            let edges = dependency_graph(&ctx.train, config);
            let components = connected_components(vars, &edges);
            log.records.push(DecisionRecord {
                kind: SplitKind::Vars,
                rows,
                vars,
                ll_factorized: None,
                ll_mixture: None,
                accepted: components.len() >= 2,
            });
            if components.len() >= 2 {
                let mut children = Vec::with_capacity(components.len());
                for comp in &components {
                    let child_ctx =
                        SliceContext::new(ctx.train.with_vars(comp), ctx.valid.with_vars(comp));
                    children.push(learn_slice(builder, child_ctx, config, rng, log)?);
                }
                Ok(builder.product(children))
            } else {
                // single component and no usable cluster split: factorize
                Ok(fit_factorized(builder, &ctx.train, config))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// leaf fitting

enum LeafAcc {
    Cat { counts: Vec<f64> },
    Gauss { n: f64, mean: f64, m2: f64 },
}

impl LeafAcc {
    fn for_meta(meta: &ColumnMeta) -> LeafAcc {
        match meta.kind {
            ColumnKind::Discrete { arity } => LeafAcc::Cat {
                counts: vec![0.0; arity as usize],
            },
            ColumnKind::Continuous => LeafAcc::Gauss {
                n: 0.0,
                mean: 0.0,
                m2: 0.0,
            },
        }
    }

    #[inline]
    fn add(&mut self, cell: Cell) {
        match (self, cell) {
            (_, Cell::Missing) => {}
            (LeafAcc::Cat { counts }, Cell::Discrete(v)) => counts[v as usize] += 1.0,
            (LeafAcc::Gauss { n, mean, m2 }, Cell::Continuous(x)) => {
                // Welford update
                *n += 1.0;
                let d = x - *mean;
                *mean += d / *n;
                *m2 += d * (x - *mean);
            }
            _ => unreachable!("cell kind does not match the column"),
        }
    }

    fn finish(&self, laplace: f64, floor: f64) -> LeafDistribution {
        match self {
            LeafAcc::Cat { counts } => {
                let k = counts.len() as f64;
                let n_obs: f64 = counts.iter().sum();
                let denom = n_obs + laplace * k;
                LeafDistribution::Categorical {
                    log_probs: counts.iter().map(|c| ((c + laplace) / denom).ln()).collect(),
                }
            }
            LeafAcc::Gauss { n, mean, m2 } => {
                if *n == 0.0 {
                    // no observations: standard-normal prior leaf
                    LeafDistribution::Gaussian {
                        mean: 0.0,
                        variance: 1.0f64.max(floor),
                    }
                } else {
                    LeafDistribution::Gaussian {
                        mean: *mean,
                        variance: (m2 / n).max(floor),
                    }
                }
            }
        }
    }
}

/// Per-variable Gaussian variance floors: the configured floor scaled by the
/// squared observed range in this slice, unscaled when the range degenerates.
fn effective_floors(slice: &DataSlice, config: &LearnConfig) -> Vec<f64> {
    (0..slice.n_vars())
        .map(|v| match slice.meta(v).kind {
            ColumnKind::Discrete { .. } => f64::NAN,
            ColumnKind::Continuous => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for r in 0..slice.n_rows() {
                    if let Cell::Continuous(x) = slice.cell(r, v) {
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
                let range = hi - lo;
                if range.is_finite() && range > 0.0 {
                    config.variance_floor * range * range
                } else {
                    config.variance_floor
                }
            }
        })
        .collect()
}

fn fit_all(slice: &DataSlice, config: &LearnConfig, floors: &[f64]) -> Vec<LeafDistribution> {
    let mut accs: Vec<LeafAcc> = (0..slice.n_vars())
        .map(|v| LeafAcc::for_meta(slice.meta(v)))
        .collect();
    for r in 0..slice.n_rows() {
        for (v, acc) in accs.iter_mut().enumerate() {
            acc.add(slice.cell(r, v));
        }
    }
    accs.iter()
        .zip(floors)
        .map(|(a, &f)| a.finish(config.laplace, f))
        .collect()
}

/// Per-cluster factorized fits plus smoothed mixing log-weights.
fn cluster_fits(
    slice: &DataSlice,
    assignments: &[u8],
    config: &LearnConfig,
    floors: &[f64],
) -> ([Vec<LeafDistribution>; 2], [f64; 2]) {
    let mut accs: [Vec<LeafAcc>; 2] = [
        (0..slice.n_vars()).map(|v| LeafAcc::for_meta(slice.meta(v))).collect(),
        (0..slice.n_vars()).map(|v| LeafAcc::for_meta(slice.meta(v))).collect(),
    ];
    let mut sizes = [0usize; 2];
    for (r, &z) in assignments.iter().enumerate() {
        sizes[z as usize] += 1;
        for (v, acc) in accs[z as usize].iter_mut().enumerate() {
            acc.add(slice.cell(r, v));
        }
    }
    let finish = |accs: &Vec<LeafAcc>| {
        accs.iter()
            .zip(floors)
            .map(|(a, &f)| a.finish(config.laplace, f))
            .collect::<Vec<_>>()
    };
    let n = assignments.len() as f64;
    let log_w = |k: usize| ((sizes[k] as f64 + config.laplace) / (n + 2.0 * config.laplace)).ln();
    ([finish(&accs[0]), finish(&accs[1])], [log_w(0), log_w(1)])
}

#[inline]
fn row_loglik(slice: &DataSlice, r: usize, leaves: &[LeafDistribution]) -> f64 {
    leaves
        .iter()
        .enumerate()
        .map(|(v, leaf)| leaf.log_density(slice.cell(r, v)))
        .sum()
}

/// Smoothed factorized fit of a slice: one leaf per variable, joined by a
/// product node (a bare leaf for single-variable slices).
pub fn fit_factorized(
    builder: &mut SpnBuilder,
    slice: &DataSlice,
    config: &LearnConfig,
) -> NodeId {
    let floors = effective_floors(slice, config);
    let leaves = fit_all(slice, config, &floors);
    let ids: Vec<NodeId> = leaves
        .into_iter()
        .enumerate()
        .map(|(v, dist)| builder.leaf(slice.var(v), dist))
        .collect();
    if ids.len() == 1 {
        ids[0]
    } else {
        builder.product(ids)
    }
}

/// Fully factorized model over a whole dataset.
pub fn factorized_model(data: &Dataset, config: &LearnConfig) -> Spn {
    let mut builder = SpnBuilder::new();
    let root = fit_factorized(&mut builder, &data.full_slice(), config);
    builder.finish(root, data.schema().to_vec())
}

// ---------------------------------------------------------------------------
// hard EM

#[derive(Debug)]
pub enum HardEmOutcome {
    Clustered(HardEmRun),
    /// An iteration (or the random initialization) emptied a cluster.
    Degenerate,
}

#[derive(Debug)]
pub struct HardEmRun {
    /// Cluster in {0, 1} per slice row.
    pub assignments: Vec<u8>,
    /// Penalized complete-data objective after each M-step; coordinate
    /// ascent keeps it non-decreasing.
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

/// Two-cluster hard EM over factorized leaves: random uniform initialization
/// (seeded), winner-take-all reassignment with ties to cluster 0, single run
/// with no restarts. Missing cells are skipped per variable.
pub fn hard_em_two_clusters(
    slice: &DataSlice,
    config: &LearnConfig,
    rng: &mut ChaCha8Rng,
) -> HardEmOutcome {
    let n = slice.n_rows();
    if n < 2 {
        return HardEmOutcome::Degenerate;
    }
    let floors = effective_floors(slice, config);
    let mut z: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    if z.iter().all(|&c| c == z[0]) {
        return HardEmOutcome::Degenerate;
    }

    let mut objectives = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let (fits, log_w) = cluster_fits(slice, &z, config, &floors);
        let mut objective = prior_penalty(&fits, &log_w, config.laplace);
        let mut new_z = vec![0u8; n];
        let mut counts = [0usize; 2];
        let mut changed = false;
        for r in 0..n {
            let s0 = log_w[0] + row_loglik(slice, r, &fits[0]);
            let s1 = log_w[1] + row_loglik(slice, r, &fits[1]);
            objective += if z[r] == 0 { s0 } else { s1 };
            let c = u8::from(s1 > s0);
            counts[c as usize] += 1;
            changed |= c != z[r];
            new_z[r] = c;
        }
        objectives.push(objective);
        if !changed {
            break;
        }
        if counts[0] == 0 || counts[1] == 0 {
            return HardEmOutcome::Degenerate;
        }
        z = new_z;
        if iterations >= config.em_max_iters {
            break;
        }
    }
    HardEmOutcome::Clustered(HardEmRun {
        assignments: z,
        objectives,
        iterations,
    })
}

/// Log-prior mass of the smoothing pseudo-counts. Adding it to the data term
/// makes each M-step an exact argmax, so the tracked objective is a true
/// coordinate-ascent Lyapunov function.
fn prior_penalty(fits: &[Vec<LeafDistribution>; 2], log_w: &[f64; 2], laplace: f64) -> f64 {
    let mut p = laplace * (log_w[0] + log_w[1]);
    for fit in fits {
        for leaf in fit {
            if let LeafDistribution::Categorical { log_probs } = leaf {
                p += laplace * log_probs.iter().sum::<f64>();
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// instance split

#[derive(Debug)]
pub enum SplitOutcome {
    Accept {
        /// Cluster in {0, 1} per training row of the slice.
        assignments: Vec<u8>,
        log_weights: [f64; 2],
        /// Factorized fit per cluster, aligned with the slice variables.
        fits: [Vec<LeafDistribution>; 2],
        ll_factorized: f64,
        ll_mixture: f64,
    },
    Reject {
        /// Validation scores when the comparison ran; `None` when the split
        /// was rejected before scoring (degenerate EM, empty validation).
        ll_factorized: Option<f64>,
        ll_mixture: Option<f64>,
    },
}

/// Attempts a two-cluster split of the slice and accepts it only if the
/// mixture beats the factorized fit on the routed validation rows, strictly.
pub fn try_instance_split(
    ctx: &SliceContext<'_>,
    config: &LearnConfig,
    rng: &mut ChaCha8Rng,
) -> SplitOutcome {
    let rejected = SplitOutcome::Reject {
        ll_factorized: None,
        ll_mixture: None,
    };
    if ctx.train.n_rows() < 2 || ctx.valid.n_rows() == 0 {
        return rejected;
    }
    let run = match hard_em_two_clusters(&ctx.train, config, rng) {
        HardEmOutcome::Clustered(run) => run,
        HardEmOutcome::Degenerate => return rejected,
    };

    let floors = effective_floors(&ctx.train, config);
    let (fits, log_weights) = cluster_fits(&ctx.train, &run.assignments, config, &floors);
    let single = fit_all(&ctx.train, config, &floors);

    let mut ll_factorized = 0.0;
    let mut ll_mixture = 0.0;
    for r in 0..ctx.valid.n_rows() {
        ll_factorized += row_loglik(&ctx.valid, r, &single);
        ll_mixture += log_add_exp(
            log_weights[0] + row_loglik(&ctx.valid, r, &fits[0]),
            log_weights[1] + row_loglik(&ctx.valid, r, &fits[1]),
        );
    }

    if ll_mixture > ll_factorized {
        SplitOutcome::Accept {
            assignments: run.assignments,
            log_weights,
            fits,
            ll_factorized,
            ll_mixture,
        }
    } else {
        SplitOutcome::Reject {
            ll_factorized: Some(ll_factorized),
            ll_mixture: Some(ll_mixture),
        }
    }
}

// ---------------------------------------------------------------------------
// variable partition

enum Binner {
    Values { arity: usize },
    MedianCut { cutoff: f64 },
}

impl Binner {
    fn levels(&self) -> usize {
        match self {
            Binner::Values { arity } => *arity,
            Binner::MedianCut { .. } => 2,
        }
    }

    #[inline]
    fn index(&self, cell: Cell) -> usize {
        match (self, cell) {
            (Binner::Values { .. }, Cell::Discrete(v)) => v as usize,
            (Binner::MedianCut { cutoff }, Cell::Continuous(x)) => usize::from(x > *cutoff),
            _ => unreachable!("cell kind does not match the column"),
        }
    }
}

fn binner_for(
    meta: &ColumnMeta,
    observed: impl Iterator<Item = Cell>,
    buf: &mut Vec<f64>,
) -> Option<Binner> {
    match meta.kind {
        ColumnKind::Discrete { arity } => Some(Binner::Values {
            arity: arity as usize,
        }),
        ColumnKind::Continuous => {
            buf.clear();
            buf.extend(observed.filter_map(|c| match c {
                Cell::Continuous(x) => Some(x),
                _ => None,
            }));
            if buf.is_empty() {
                return None;
            }
            buf.sort_by(f64::total_cmp);
            let n = buf.len();
            let cutoff = if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            };
            Some(Binner::MedianCut { cutoff })
        }
    }
}

/// Pairwise dependency edges over the slice's variables (local indices).
/// Each unordered pair is tested on its pairwise-complete rows; too little
/// overlap concludes independence, continuous members are binarized at their
/// median over those rows, and an edge appears when the G-test rejects at
/// `alpha`.
pub fn dependency_graph(slice: &DataSlice, config: &LearnConfig) -> Vec<(usize, usize)> {
    let vars = slice.n_vars();
    let mut edges = Vec::new();
    let mut pairs: Vec<(Cell, Cell)> = Vec::new();
    let mut buf: Vec<f64> = Vec::new();
    for i in 0..vars {
        for j in (i + 1)..vars {
            pairs.clear();
            for r in 0..slice.n_rows() {
                let a = slice.cell(r, i);
                let b = slice.cell(r, j);
                if !a.is_missing() && !b.is_missing() {
                    pairs.push((a, b));
                }
            }
            if pairs.is_empty() || pairs.len() < config.min_overlap {
                continue;
            }
            let Some(bi) = binner_for(slice.meta(i), pairs.iter().map(|p| p.0), &mut buf) else {
                continue;
            };
            let Some(bj) = binner_for(slice.meta(j), pairs.iter().map(|p| p.1), &mut buf) else {
                continue;
            };
            let mut table = vec![vec![0u64; bj.levels()]; bi.levels()];
            for &(a, b) in &pairs {
                table[bi.index(a)][bj.index(b)] += 1;
            }
            match pairwise_g_test(&table) {
                Ok(t) if t.p < config.alpha => edges.push((i, j)),
                _ => {}
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Dataset, SynthSpec};
    use crate::spn::SpnNode;

    fn binary_dataset(rows: &[Vec<u32>], n_cols: usize) -> Dataset {
        let schema = (0..n_cols)
            .map(|i| ColumnMeta::discrete(format!("v{i}"), 2))
            .collect();
        Dataset::new(
            schema,
            rows.iter()
                .map(|r| r.iter().map(|&v| Cell::Discrete(v)).collect()),
        )
        .unwrap()
    }

    /// Rows drawn from two well-separated factorized clusters; the first
    /// half comes from the p=0.9 cluster, the second from p=0.1.
    fn two_cluster_rows(n_per: usize, n_vars: usize, seed: u64) -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(2 * n_per);
        for half in 0..2 {
            let p = if half == 0 { 0.9 } else { 0.1 };
            for _ in 0..n_per {
                rows.push(
                    (0..n_vars)
                        .map(|_| u8::from(rng.gen::<f64>() < p) as u32)
                        .collect(),
                );
            }
        }
        rows
    }

    #[test]
    fn tiny_slice_becomes_a_factorized_product() {
        let rows: Vec<Vec<u32>> = (0..10).map(|i| vec![i % 2, (i / 2) % 2, 1]).collect();
        let data = binary_dataset(&rows, 3);
        let spn = learn(&data, &data, &LearnConfig::default()).unwrap();
        assert!(spn.validate().is_valid());
        match spn.node(spn.root()).unwrap() {
            SpnNode::Product { children } => {
                assert_eq!(children.len(), 3);
                for c in children {
                    assert!(matches!(spn.node(*c).unwrap(), SpnNode::Leaf { .. }));
                }
            }
            other => panic!("expected a product root, got {other:?}"),
        }
    }

    #[test]
    fn separated_clusters_recover_the_mixture_weights() {
        let train = binary_dataset(&two_cluster_rows(1000, 6, 21), 6);
        let valid = binary_dataset(&two_cluster_rows(200, 6, 22), 6);
        let spn = learn(&train, &valid, &LearnConfig::default()).unwrap();
        assert!(spn.validate().is_valid());
        match spn.node(spn.root()).unwrap() {
            SpnNode::Sum { log_weights, .. } => {
                let w0 = log_weights[0].exp();
                assert!((w0 - 0.5).abs() <= 0.05, "w0 = {w0}");
            }
            other => panic!("expected a sum root, got {other:?}"),
        }
    }

    #[test]
    fn instance_split_assignments_match_ground_truth() {
        let train = binary_dataset(&two_cluster_rows(1000, 6, 31), 6);
        let valid = binary_dataset(&two_cluster_rows(200, 6, 32), 6);
        let ctx = SliceContext::new(train.full_slice(), valid.full_slice());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        match try_instance_split(&ctx, &LearnConfig::default(), &mut rng) {
            SplitOutcome::Accept { assignments, .. } => {
                let agree = assignments[..1000].iter().filter(|&&z| z == 0).count()
                    + assignments[1000..].iter().filter(|&&z| z == 1).count();
                let agree = agree.max(2000 - agree);
                assert!(agree >= 1900, "agreement {agree}/2000");
            }
            SplitOutcome::Reject { .. } => panic!("expected the split to be accepted"),
        }
    }

    #[test]
    fn identical_rows_reject_the_split() {
        let rows: Vec<Vec<u32>> = (0..50).map(|_| vec![1, 0, 1]).collect();
        let data = binary_dataset(&rows, 3);
        let ctx = SliceContext::new(data.full_slice(), data.full_slice());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            try_instance_split(&ctx, &LearnConfig::default(), &mut rng),
            SplitOutcome::Reject { .. }
        ));
    }

    #[test]
    fn empty_validation_rejects_the_split() {
        let train = binary_dataset(&two_cluster_rows(100, 4, 41), 4);
        let ctx = SliceContext::new(train.full_slice(), train.full_slice().with_rows(&[]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            try_instance_split(&ctx, &LearnConfig::default(), &mut rng),
            SplitOutcome::Reject {
                ll_factorized: None,
                ll_mixture: None
            }
        ));
    }

    #[test]
    fn two_far_rows_split_one_each() {
        let data = binary_dataset(&vec![vec![1, 1, 1, 1], vec![0, 0, 0, 0]], 4);
        // pick a seed whose random init puts the rows in different clusters
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match hard_em_two_clusters(&data.full_slice(), &LearnConfig::default(), &mut rng) {
            HardEmOutcome::Clustered(run) => {
                assert_ne!(run.assignments[0], run.assignments[1]);
            }
            HardEmOutcome::Degenerate => panic!("init emptied a cluster for this seed"),
        }
    }

    #[test]
    fn hard_em_is_deterministic_per_seed() {
        let data = binary_dataset(&two_cluster_rows(200, 5, 51), 5);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match hard_em_two_clusters(&data.full_slice(), &LearnConfig::default(), &mut rng) {
                HardEmOutcome::Clustered(r) => r.assignments,
                HardEmOutcome::Degenerate => panic!(),
            }
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn hard_em_objective_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..40 {
            let spec = SynthSpec {
                n_rows: 2 + (trial * 13) % 200,
                n_discrete: 1 + trial % 4,
                n_continuous: trial % 3,
                missing_rate: 0.1 * (trial % 5) as f64,
                seed: 1000 + trial as u64,
            };
            let synth = generate_synthetic(&spec).unwrap();
            if let HardEmOutcome::Clustered(run) = hard_em_two_clusters(
                &synth.data.full_slice(),
                &LearnConfig::default(),
                &mut rng,
            ) {
                assert!(run.iterations <= LearnConfig::default().em_max_iters);
                for w in run.objectives.windows(2) {
                    assert!(
                        w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0),
                        "objective decreased: {} -> {} (trial {trial})",
                        w[0],
                        w[1]
                    );
                }
            }
        }
    }

    #[test]
    fn smoothed_bernoulli_fit_matches_the_formula() {
        let data = binary_dataset(&vec![vec![1], vec![1], vec![0]], 1);
        let mut b = SpnBuilder::new();
        let id = fit_factorized(&mut b, &data.full_slice(), &LearnConfig::default());
        let spn = b.finish(id, data.schema().to_vec());
        match spn.node(id).unwrap() {
            SpnNode::Leaf {
                dist: LeafDistribution::Categorical { log_probs },
                ..
            } => {
                // (2 + 0.1) / (3 + 0.2)
                assert!((log_probs[1].exp() - 0.65625).abs() <= 1e-12);
            }
            other => panic!("expected a bare leaf, got {other:?}"),
        }
    }

    #[test]
    fn constant_continuous_column_hits_the_variance_floor() {
        let data = Dataset::new(
            vec![ColumnMeta::continuous("x")],
            vec![vec![Cell::Continuous(2.0)], vec![Cell::Continuous(2.0)]],
        )
        .unwrap();
        let config = LearnConfig::default();
        let mut b = SpnBuilder::new();
        let id = fit_factorized(&mut b, &data.full_slice(), &config);
        let spn = b.finish(id, data.schema().to_vec());
        match spn.node(id).unwrap() {
            SpnNode::Leaf {
                dist: LeafDistribution::Gaussian { mean, variance },
                ..
            } => {
                assert_eq!(*mean, 2.0);
                assert_eq!(*variance, config.variance_floor);
            }
            other => panic!("expected a Gaussian leaf, got {other:?}"),
        }
    }

    #[test]
    fn unobserved_columns_fall_back_to_prior_leaves() {
        let data = Dataset::new(
            vec![ColumnMeta::discrete("a", 2), ColumnMeta::continuous("x")],
            vec![
                vec![Cell::Missing, Cell::Missing],
                vec![Cell::Missing, Cell::Missing],
            ],
        )
        .unwrap();
        let mut b = SpnBuilder::new();
        let id = fit_factorized(&mut b, &data.full_slice(), &LearnConfig::default());
        let spn = b.finish(id, data.schema().to_vec());
        let children = spn.node(id).unwrap().children().to_vec();
        match spn.node(children[0]).unwrap() {
            SpnNode::Leaf {
                dist: LeafDistribution::Categorical { log_probs },
                ..
            } => {
                assert!((log_probs[0].exp() - 0.5).abs() <= 1e-12);
            }
            _ => panic!(),
        }
        match spn.node(children[1]).unwrap() {
            SpnNode::Leaf {
                dist: LeafDistribution::Gaussian { mean, variance },
                ..
            } => {
                assert_eq!((*mean, *variance), (0.0, 1.0));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn copied_variable_produces_an_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<u32>> = (0..1000)
            .map(|_| {
                let u = u32::from(rng.gen::<bool>());
                vec![u, u]
            })
            .collect();
        let data = binary_dataset(&rows, 2);
        let edges = dependency_graph(&data.full_slice(), &LearnConfig::default());
        assert_eq!(edges, vec![(0, 1)]);
    }

    #[test]
    fn small_overlap_concludes_independence() {
        // 10 pairwise-complete rows of perfectly correlated values
        let mut rows = Vec::new();
        for i in 0..10u32 {
            rows.push(vec![Cell::Discrete(i % 2), Cell::Discrete(i % 2)]);
        }
        for _ in 0..100 {
            rows.push(vec![Cell::Discrete(1), Cell::Missing]);
        }
        let data = Dataset::new(
            vec![ColumnMeta::discrete("a", 2), ColumnMeta::discrete("b", 2)],
            rows,
        )
        .unwrap();
        let edges = dependency_graph(&data.full_slice(), &LearnConfig::default());
        assert!(edges.is_empty());
    }

    #[test]
    fn g_test_false_positive_rate_is_near_alpha() {
        let config = LearnConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let trials = 500;
        let mut edges = 0;
        for _ in 0..trials {
            let rows: Vec<Vec<u32>> = (0..2000)
                .map(|_| vec![u32::from(rng.gen::<bool>()), u32::from(rng.gen::<bool>())])
                .collect();
            let data = binary_dataset(&rows, 2);
            if !dependency_graph(&data.full_slice(), &config).is_empty() {
                edges += 1;
            }
        }
        let rate = edges as f64 / trials as f64;
        assert!((rate - 0.05).abs() <= 0.02, "false positive rate {rate}");
    }

    #[test]
    fn dependent_pairs_partition_into_components() {
        // v1 copies v0 with 5% noise, v3 copies v2 with 5% noise, the pairs
        // are mutually independent
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut flip = |v: u32, p: f64, rng: &mut ChaCha8Rng| {
            if rng.gen::<f64>() < p {
                1 - v
            } else {
                v
            }
        };
        let rows: Vec<Vec<u32>> = (0..5000)
            .map(|_| {
                let a = u32::from(rng.gen::<bool>());
                let c = u32::from(rng.gen::<bool>());
                let b = flip(a, 0.05, &mut rng);
                let d = flip(c, 0.05, &mut rng);
                vec![a, b, c, d]
            })
            .collect();
        let data = binary_dataset(&rows, 4);
        let config = LearnConfig::default();
        let edges = dependency_graph(&data.full_slice(), &config);
        let components = connected_components(4, &edges);
        assert_eq!(components, vec![vec![0, 1], vec![2, 3]]);

        // end to end, the learner must still emit a valid full-scope model
        let (train_rows, valid_rows) = (0..4500, 4500..5000);
        let train = binary_dataset(&rows[train_rows], 4);
        let valid = binary_dataset(&rows[valid_rows], 4);
        let spn = learn(&train, &valid, &config).unwrap();
        assert!(spn.validate().is_valid());
    }

    #[test]
    fn learning_is_deterministic_per_seed() {
        let train = binary_dataset(&two_cluster_rows(400, 5, 61), 5);
        let valid = binary_dataset(&two_cluster_rows(100, 5, 62), 5);
        let config = LearnConfig::default();
        let a = learn(&train, &valid, &config).unwrap();
        let b = learn(&train, &valid, &config).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn learned_tree_has_single_parents_and_full_scope() {
        let train = binary_dataset(&two_cluster_rows(500, 6, 71), 6);
        let valid = binary_dataset(&two_cluster_rows(100, 6, 72), 6);
        let spn = learn(&train, &valid, &LearnConfig::default()).unwrap();
        assert!(spn.validate().is_valid());
        let mut parents = vec![0usize; spn.node_count()];
        for node in spn.nodes() {
            for c in node.children() {
                parents[c.0] += 1;
            }
        }
        parents[spn.root().0] += 1;
        assert!(parents.iter().all(|&p| p == 1), "parent counts {parents:?}");
        assert_eq!(spn.scope_of(spn.root()).unwrap().len(), 6);
    }

    #[test]
    fn learned_model_beats_factorized_on_training_data() {
        let train = binary_dataset(&two_cluster_rows(500, 6, 81), 6);
        let valid = binary_dataset(&two_cluster_rows(100, 6, 82), 6);
        let config = LearnConfig::default();
        let learned = learn(&train, &valid, &config).unwrap();
        let baseline = factorized_model(&train, &config);
        let ll_learned = learned.mean_log_density(train.rows()).unwrap();
        let ll_baseline = baseline.mean_log_density(train.rows()).unwrap();
        assert!(
            ll_learned >= ll_baseline,
            "learned {ll_learned} vs factorized {ll_baseline}"
        );
    }

    #[test]
    fn schema_mismatch_and_empty_train_are_errors() {
        let a = binary_dataset(&vec![vec![0, 1]], 2);
        let b = binary_dataset(&vec![vec![0]], 1);
        assert!(matches!(
            learn(&a, &b, &LearnConfig::default()),
            Err(LearnError::SchemaMismatch)
        ));
        let empty = Dataset::new(a.schema().to_vec(), Vec::<Vec<Cell>>::new()).unwrap();
        assert!(matches!(
            learn(&empty, &a, &LearnConfig::default()),
            Err(LearnError::EmptyTrainingData)
        ));
    }

    #[test]
    fn decision_log_replays_soundly() {
        let train = binary_dataset(&two_cluster_rows(400, 5, 91), 5);
        let valid = binary_dataset(&two_cluster_rows(100, 5, 92), 5);
        let (_, log) = learn_with_log(&train, &valid, &LearnConfig::default()).unwrap();
        assert!(!log.records.is_empty());
        assert!(log.validation_gate_holds());
        let reparsed = DecisionLog::parse_tsv(&log.to_tsv()).unwrap();
        assert!(reparsed.validation_gate_holds());
    }
}
