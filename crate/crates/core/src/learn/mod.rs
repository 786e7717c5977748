//! Structure learners: the greedy validated-split learner ([`minispn`]) and
//! the Pareto-front random search baseline ([`pareto`]).

pub mod minispn;
pub mod pareto;

pub use minispn::{
    dependency_graph, factorized_model, fit_factorized, hard_em_two_clusters, learn,
    learn_with_log, try_instance_split, HardEmOutcome, HardEmRun, SplitOutcome,
};
pub use pareto::{
    apply_production, dominates, pareto_search, pareto_search_traced, CandidateModel, FrontPoint,
    ParetoConfig, ParetoSet,
};

use crate::data::DataSlice;
use std::fmt;
use std::time::Instant;
use thiserror::Error;

/// All learner thresholds and tolerances in one place. These are fixed
/// defaults, not searched.
#[derive(Debug, Clone)]
pub struct LearnConfig {
    /// Slice row count below which all variables are declared independent.
    pub min_instances: usize,
    /// Significance level of the pairwise G-test.
    pub alpha: f64,
    /// Pairwise-complete row count below which independence is concluded.
    pub min_overlap: usize,
    pub em_max_iters: usize,
    /// Categorical smoothing pseudo-count.
    pub laplace: f64,
    /// Gaussian variance floor, scaled by the squared observed range of the
    /// slice being fit (unscaled when the range is degenerate).
    pub variance_floor: f64,
    pub seed: u64,
    /// Cooperative cutoff; learning returns `LearnError::Timeout` past it.
    pub deadline: Option<Instant>,
}

impl Default for LearnConfig {
    fn default() -> LearnConfig {
        LearnConfig {
            min_instances: 30,
            alpha: 0.05,
            min_overlap: 30,
            em_max_iters: 100,
            laplace: 0.1,
            variance_floor: 1e-6,
            seed: 0,
            deadline: None,
        }
    }
}

impl LearnConfig {
    pub(crate) fn past_deadline(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() > d)
    }
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training and validation data have different schemas")]
    SchemaMismatch,
    #[error("training data has no rows")]
    EmptyTrainingData,
    #[error("learning exceeded its deadline")]
    Timeout,
}

/// One subproblem of the recursion: training rows plus the validation rows
/// routed to it, over the same variables.
#[derive(Debug, Clone)]
pub struct SliceContext<'a> {
    pub train: DataSlice<'a>,
    pub valid: DataSlice<'a>,
}

impl<'a> SliceContext<'a> {
    pub fn new(train: DataSlice<'a>, valid: DataSlice<'a>) -> SliceContext<'a> {
        debug_assert_eq!(train.var_ids(), valid.var_ids());
        SliceContext { train, valid }
    }
}

/// What a split attempt was about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    /// Two-cluster instance split gated on validation likelihood.
    Cluster,
    /// Variable partition by dependency-graph connected components.
    Vars,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitKind::Cluster => write!(f, "cluster"),
            SplitKind::Vars => write!(f, "vars"),
        }
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub kind: SplitKind,
    pub rows: usize,
    pub vars: usize,
    pub ll_factorized: Option<f64>,
    pub ll_mixture: Option<f64>,
    pub accepted: bool,
}

/// Trace of every split attempt, writable as tab-separated text and
/// replayable to re-assert the validation gate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionLog {
    pub records: Vec<DecisionRecord>,
}

impl DecisionLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("attempt\trows\tvars\tll_factorized\tll_mixture\tdecision\n");
        for r in &self.records {
            let fmt_ll = |ll: Option<f64>| match ll {
                Some(x) => format!("{x:.16e}"),
                None => "na".to_string(),
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.kind,
                r.rows,
                r.vars,
                fmt_ll(r.ll_factorized),
                fmt_ll(r.ll_mixture),
                if r.accepted { "accept" } else { "reject" }
            ));
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<DecisionLog, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 6 {
                return Err(format!("line {}: expected 6 fields", i + 1));
            }
            let parse_ll = |s: &str| -> Result<Option<f64>, String> {
                if s == "na" {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| format!("line {}: {e}", i + 1))
                }
            };
            records.push(DecisionRecord {
                kind: match fields[0] {
                    "cluster" => SplitKind::Cluster,
                    "vars" => SplitKind::Vars,
                    other => return Err(format!("line {}: unknown attempt {other:?}", i + 1)),
                },
                rows: fields[1].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
                vars: fields[2].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
                ll_factorized: parse_ll(fields[3])?,
                ll_mixture: parse_ll(fields[4])?,
                accepted: match fields[5] {
                    "accept" => true,
                    "reject" => false,
                    other => return Err(format!("line {}: unknown decision {other:?}", i + 1)),
                },
            });
        }
        Ok(DecisionLog { records })
    }

    /// The validation gate is sound iff every accepted cluster split carried
    /// a strictly higher mixture validation likelihood.
    pub fn validation_gate_holds(&self) -> bool {
        self.records
            .iter()
            .filter(|r| r.kind == SplitKind::Cluster && r.accepted)
            .all(|r| match (r.ll_factorized, r.ll_mixture) {
                (Some(f), Some(m)) => m > f,
                _ => false,
            })
    }
}
