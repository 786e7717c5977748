use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

mod bench;
mod commands;

#[derive(Parser)]
#[command(name = "minispn", version, about = "Sum-product network toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Minispn,
    Pareto,
    Hybrid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Minispn => "minispn",
            Method::Pareto => "pareto",
            Method::Hybrid => "hybrid",
        }
    }
}

/// Learner thresholds; defaults are fixed, not searched.
#[derive(Args, Debug, Clone)]
pub struct ThresholdArgs {
    /// Slice row count below which all variables are declared independent
    #[arg(long, default_value_t = 30)]
    pub min_instances: usize,
    /// Significance level of the pairwise G-test
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Pairwise-complete row count below which independence is concluded
    #[arg(long, default_value_t = 30)]
    pub min_overlap: usize,
    #[arg(long, default_value_t = 100)]
    pub em_max_iters: usize,
    /// Categorical smoothing pseudo-count
    #[arg(long, default_value_t = 0.1)]
    pub laplace: f64,
    /// Gaussian variance floor (scaled by squared slice range)
    #[arg(long, default_value_t = 1e-6)]
    pub variance_floor: f64,
    /// Pareto search iterations
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Expansions per Pareto iteration
    #[arg(long, default_value_t = 10)]
    pub expansions_per_iteration: usize,
    /// Refit leaf parameters on routed rows after a production rule
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub refit_after_rule: bool,
}

#[derive(Args, Debug)]
pub struct LearnArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Benchmark stem (resolved under --data-dir) or a mixed CSV path
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Where to write the learned model
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Validation fraction carved out of mixed CSVs (stems ship .valid files)
    #[arg(long, default_value_t = 0.1)]
    pub valid_fraction: f64,
    #[arg(long, default_value = "?")]
    pub missing_token: String,
    /// Abort learning after this many seconds
    #[arg(long)]
    pub timeout_s: Option<u64>,
    /// Write the split-decision log (tab-separated) here
    #[arg(long)]
    pub decision_log: Option<PathBuf>,
    /// Write the Pareto front trace (tab-separated) here
    #[arg(long)]
    pub front_trace: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated dataset stems, resolved under --data-dir
    #[arg(long)]
    pub datasets: String,
    /// Comma-separated methods
    #[arg(long, default_value = "minispn,pareto,hybrid")]
    pub methods: String,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Human-readable report path; a .tsv variant is written alongside
    #[arg(long, default_value = "bench_report.txt")]
    pub out: PathBuf,
    /// Per-cell learning timeout in seconds
    #[arg(long)]
    pub timeout_s: Option<u64>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// CSV output path; the ground-truth model lands next to it (.spn)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub discrete: usize,
    #[arg(long, default_value_t = 4)]
    pub continuous: usize,
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "?")]
    pub missing_token: String,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model and write it in the spnmodel v1 format
    Learn(LearnArgs),
    /// Print the mean log-likelihood of a model on a dataset (4 decimals)
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Stem (uses the .test.data file), .csv, or explicit data file
        #[arg(long)]
        data: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "?")]
        missing_token: String,
    },
    /// Check a model file against the structural invariants
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Draw rows from a model, CSV on stdout
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train and score learners across benchmark datasets
    Bench(BenchArgs),
    /// Generate a synthetic mixed dataset plus its ground-truth model
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Learn(args) => commands::cmd_learn(&args),
        Command::Eval {
            model,
            data,
            data_dir,
            missing_token,
        } => commands::cmd_eval(&model, &data, data_dir.as_deref(), &missing_token),
        Command::Validate { model } => commands::cmd_validate(&model),
        Command::Sample { model, n, seed } => commands::cmd_sample(&model, n, seed),
        Command::Bench(args) => bench::cmd_bench(&args),
        Command::Synth(args) => commands::cmd_synth(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
