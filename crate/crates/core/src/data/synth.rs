//! Synthetic mixed-type data with controllable MCAR missingness. The ground
//! truth is a small mixture of factorized models, returned alongside the
//! drawn dataset so tests can score learners against it.

use super::{Cell, ColumnMeta, DataError, Dataset};
use crate::spn::{LeafDistribution, Spn, SpnBuilder, VarId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_discrete: usize,
    pub n_continuous: usize,
    /// Probability that any one cell is masked, independently (MCAR).
    pub missing_rate: f64,
    pub seed: u64,
}

#[derive(Debug)]
pub struct Synthetic {
    pub data: Dataset,
    pub ground_truth: Spn,
}

/// Draws `n_rows` from a freshly built 2-4 component mixture of factorized
/// models over the requested schema, then masks cells at `missing_rate`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Synthetic, DataError> {
    let n_vars = spec.n_discrete + spec.n_continuous;
    if n_vars == 0 {
        return Err(DataError::EmptySchema);
    }
    if !(0.0..1.0).contains(&spec.missing_rate) {
        return Err(DataError::InvalidMissingRate(spec.missing_rate));
    }

    let schema: Vec<ColumnMeta> = (0..n_vars)
        .map(|i| {
            if i < spec.n_discrete {
                ColumnMeta::discrete(format!("v{i}"), 2)
            } else {
                ColumnMeta::continuous(format!("v{i}"))
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ground_truth = random_mixture(&schema, &mut rng);
    debug_assert!(ground_truth.validate().is_valid());

    let rows = (0..spec.n_rows).map(|_| {
        ground_truth
            .sample(&mut rng)
            .into_iter()
            .map(|cell| {
                if spec.missing_rate > 0.0 && rng.gen::<f64>() < spec.missing_rate {
                    Cell::Missing
                } else {
                    cell
                }
            })
            .collect::<Vec<Cell>>()
    });
    // collect up front: Dataset::new audits, and rows borrow the rng
    let rows: Vec<Vec<Cell>> = rows.collect();

    Ok(Synthetic {
        data: Dataset::new(schema, rows)?,
        ground_truth,
    })
}

fn random_mixture(schema: &[ColumnMeta], rng: &mut ChaCha8Rng) -> Spn {
    let k = rng.gen_range(2..=4usize);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let log_weights: Vec<f64> = raw.iter().map(|w| (w / total).ln()).collect();

    let mut b = SpnBuilder::new();
    let mut components = Vec::with_capacity(k);
    for _ in 0..k {
        let leaves: Vec<_> = schema
            .iter()
            .enumerate()
            .map(|(v, meta)| {
                let dist = match meta.kind {
                    super::ColumnKind::Discrete { arity } => {
                        let mut probs: Vec<f64> =
                            (0..arity).map(|_| rng.gen_range(0.1..0.9)).collect();
                        let t: f64 = probs.iter().sum();
                        for p in &mut probs {
                            *p /= t;
                        }
                        LeafDistribution::categorical_from_probs(&probs)
                    }
                    super::ColumnKind::Continuous => {
                        let mean = rng.gen_range(-3.0..3.0);
                        let sd: f64 = rng.gen_range(0.5..1.5);
                        LeafDistribution::Gaussian {
                            mean,
                            variance: sd * sd,
                        }
                    }
                };
                b.leaf(VarId(v), dist)
            })
            .collect();
        components.push(if leaves.len() == 1 {
            leaves[0]
        } else {
            b.product(leaves)
        });
    }
    let root = b.sum(components, log_weights);
    b.finish(root, schema.to_vec())
}
