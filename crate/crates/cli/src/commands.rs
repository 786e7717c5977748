use crate::{LearnArgs, Method, SynthArgs, ThresholdArgs};
use anyhow::{bail, Context};
use minispn_core::data::{
    generate_synthetic, load_benchmark_file, load_benchmark_triplet, load_mixed_csv,
    load_mixed_csv_with_kinds, split_rows, write_mixed_csv, Cell, ColumnKind, Dataset, SynthSpec,
};
use minispn_core::learn::{
    learn_with_log, pareto_search_traced, DecisionLog, FrontPoint, LearnConfig, ParetoConfig,
};
use minispn_core::spn::{ModelError, Spn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

pub fn learn_config(t: &ThresholdArgs, seed: u64, deadline: Option<Instant>) -> LearnConfig {
    LearnConfig {
        min_instances: t.min_instances,
        alpha: t.alpha,
        min_overlap: t.min_overlap,
        em_max_iters: t.em_max_iters,
        laplace: t.laplace,
        variance_floor: t.variance_floor,
        seed,
        deadline,
    }
}

pub fn pareto_config(t: &ThresholdArgs, seed: u64, deadline: Option<Instant>) -> ParetoConfig {
    ParetoConfig {
        iterations: t.iterations,
        expansions_per_iteration: t.expansions_per_iteration,
        seed,
        refit_after_rule: t.refit_after_rule,
        deadline,
    }
}

/// Copies the selected rows into a fresh dataset.
pub fn subset(data: &Dataset, rows: &[usize]) -> Dataset {
    Dataset::new(
        data.schema().to_vec(),
        rows.iter().map(|&r| data.row(r).to_vec()),
    )
    .expect("subset of an audited dataset stays valid")
}

fn stem_path(data: &str, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(dir) => dir.join(data),
        None => PathBuf::from(data),
    }
}

fn trio_exists(stem: &Path) -> bool {
    let mut p = stem.as_os_str().to_owned();
    p.push(".ts.data");
    PathBuf::from(p).exists()
}

/// Training and validation data for `learn`: a benchmark stem uses its
/// `.ts`/`.valid` files, a mixed CSV is split by `valid_fraction`.
fn resolve_learn_data(
    args: &LearnArgs,
) -> anyhow::Result<(Dataset, Dataset)> {
    let stem = stem_path(&args.data, args.data_dir.as_deref());
    if trio_exists(&stem) {
        let (train, valid, _test) = load_benchmark_triplet(&stem)?;
        return Ok((train, valid));
    }
    let candidates = [PathBuf::from(&args.data), stem];
    for path in &candidates {
        if path.is_file() {
            if path.extension().is_some_and(|e| e == "csv") {
                let all = load_mixed_csv(path, &args.missing_token)?;
                let (train_ids, valid_ids) =
                    split_rows(&all, args.valid_fraction, args.seed)?;
                return Ok((subset(&all, &train_ids), subset(&all, &valid_ids)));
            }
            bail!(
                "{}: expected a benchmark stem or a .csv file",
                path.display()
            );
        }
    }
    bail!("no data found for {:?} (no trio or csv)", args.data);
}

/// Dataset for `eval`: an explicit file (.csv or benchmark format) or a
/// stem, which evaluates against its `.test.data` file. CSV columns are
/// parsed against the model's column kinds, so fully missing columns work.
fn resolve_eval_data(
    data: &str,
    data_dir: Option<&Path>,
    missing_token: &str,
    kinds: &[ColumnKind],
) -> anyhow::Result<Dataset> {
    let candidates = [PathBuf::from(data), stem_path(data, data_dir)];
    for path in &candidates {
        if path.is_file() {
            return Ok(if path.extension().is_some_and(|e| e == "csv") {
                load_mixed_csv_with_kinds(path, missing_token, kinds)?
            } else {
                load_benchmark_file(path)?
            });
        }
    }
    let stem = stem_path(data, data_dir);
    if trio_exists(&stem) {
        let mut p = stem.into_os_string();
        p.push(".test.data");
        return Ok(load_benchmark_file(PathBuf::from(p))?);
    }
    bail!("no data found for {data:?}");
}

pub struct TrainedModel {
    pub spn: Spn,
    pub seconds: f64,
    pub decision_log: DecisionLog,
    pub front_trace: Vec<FrontPoint>,
}

/// Runs the selected learner, timing the learning phase only.
pub fn train(
    method: Method,
    train: &Dataset,
    valid: &Dataset,
    thresholds: &ThresholdArgs,
    seed: u64,
    deadline: Option<Instant>,
) -> Result<TrainedModel, minispn_core::learn::LearnError> {
    let lcfg = learn_config(thresholds, seed, deadline);
    let pcfg = pareto_config(thresholds, seed, deadline);
    let start = Instant::now();
    let mut decision_log = DecisionLog::default();
    let mut front_trace = Vec::new();
    let spn = match method {
        Method::Minispn => {
            let (spn, log) = learn_with_log(train, valid, &lcfg)?;
            decision_log = log;
            spn
        }
        Method::Pareto => {
            pareto_search_traced(train, valid, &pcfg, &lcfg, None, Some(&mut front_trace))?
        }
        Method::Hybrid => {
            let (init, log) = learn_with_log(train, valid, &lcfg)?;
            decision_log = log;
            pareto_search_traced(train, valid, &pcfg, &lcfg, Some(init), Some(&mut front_trace))?
        }
    };
    Ok(TrainedModel {
        spn,
        seconds: start.elapsed().as_secs_f64(),
        decision_log,
        front_trace,
    })
}

fn front_trace_tsv(points: &[FrontPoint]) -> String {
    let mut out = String::from("iteration\tdof\tvalid_ll\n");
    for p in points {
        out.push_str(&format!("{}\t{}\t{:.16e}\n", p.iteration, p.dof, p.valid_ll));
    }
    out
}

pub fn cmd_learn(args: &LearnArgs) -> anyhow::Result<ExitCode> {
    let (train_data, valid_data) = resolve_learn_data(args)?;
    let deadline = args
        .timeout_s
        .map(|s| Instant::now() + std::time::Duration::from_secs(s));
    let trained = train(
        args.method,
        &train_data,
        &valid_data,
        &args.thresholds,
        args.seed,
        deadline,
    )?;

    trained.spn.save(&args.out)?;
    if let Some(path) = &args.decision_log {
        std::fs::write(path, trained.decision_log.to_tsv())
            .with_context(|| path.display().to_string())?;
    }
    if let Some(path) = &args.front_trace {
        std::fs::write(path, front_trace_tsv(&trained.front_trace))
            .with_context(|| path.display().to_string())?;
    }

    let train_ll = trained.spn.mean_log_density(train_data.rows())?;
    let valid_ll = trained.spn.mean_log_density(valid_data.rows())?;
    println!(
        "nodes={} dof={} train_ll={:.4} valid_ll={:.4} seconds={:.2}",
        trained.spn.node_count(),
        trained.spn.num_free_parameters(),
        train_ll,
        valid_ll,
        trained.seconds
    );
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_eval(
    model: &Path,
    data: &str,
    data_dir: Option<&Path>,
    missing_token: &str,
) -> anyhow::Result<ExitCode> {
    let spn = Spn::load(model)?;
    let kinds: Vec<ColumnKind> = spn.schema().iter().map(|m| m.kind).collect();
    let dataset = resolve_eval_data(data, data_dir, missing_token, &kinds)?;
    if dataset.n_cols() != spn.n_vars() {
        bail!(
            "model has {} variables but the data has {} columns",
            spn.n_vars(),
            dataset.n_cols()
        );
    }
    let ll = spn.mean_log_density(dataset.rows())?;
    println!("{ll:.4}");
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_validate(model: &Path) -> anyhow::Result<ExitCode> {
    match Spn::load(model) {
        Ok(_) => {
            println!("valid");
            Ok(ExitCode::SUCCESS)
        }
        Err(ModelError::Invalid(report)) => {
            for v in &report.violations {
                println!("{v}");
            }
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_sample(model: &Path, n: u64, seed: u64) -> anyhow::Result<ExitCode> {
    // header from the model schema; sampled rows are always fully observed
    let spn = Spn::load(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let names: Vec<&str> = spn.schema().iter().map(|m| m.name.as_str()).collect();
    writeln!(out, "{}", names.join(","))?;
    for _ in 0..n {
        let row = spn.sample(&mut rng);
        let mut first = true;
        for cell in row {
            if !first {
                write!(out, ",")?;
            }
            first = false;
            match cell {
                Cell::Discrete(v) => write!(out, "{v}")?,
                Cell::Continuous(x) => write!(out, "{x}")?,
                Cell::Missing => unreachable!("samples are fully observed"),
            }
        }
        writeln!(out)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn cmd_synth(args: &SynthArgs) -> anyhow::Result<ExitCode> {
    let synth = generate_synthetic(&SynthSpec {
        n_rows: args.rows,
        n_discrete: args.discrete,
        n_continuous: args.continuous,
        missing_rate: args.missing_rate,
        seed: args.seed,
    })?;
    write_mixed_csv(&synth.data, &args.out, &args.missing_token)?;
    let model_path = args.out.with_extension("spn");
    synth.ground_truth.save(&model_path)?;
    println!(
        "wrote {} rows to {} (ground truth: {})",
        args.rows,
        args.out.display(),
        model_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
