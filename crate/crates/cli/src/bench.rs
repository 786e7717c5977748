//! The benchmark harness: trains each method on each dataset trio, scores
//! mean test log-likelihood, and emits aligned plain-text and tab-separated
//! tables with identical numbers. Every cell derives its own seed from the
//! run seed and the cell's names, so results do not depend on execution
//! order. Cells that exceed the timeout or fail to load are marked, not
//! fatal.

use crate::commands::train;
use crate::{BenchArgs, Method};
use clap::ValueEnum;
use minispn_core::data::load_benchmark_triplet;
use minispn_core::learn::LearnError;
use std::process::ExitCode;
use std::time::{Duration, Instant};

fn fnv1a64(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn cell_seed(run_seed: u64, dataset: &str, method: Method) -> u64 {
    fnv1a64(&format!("{run_seed}:{dataset}:{}", method.name()))
}

enum Outcome {
    Done { test_ll: f64, dof: usize },
    Timeout,
    Error,
}

struct CellRow {
    dataset: String,
    method: Method,
    outcome: Outcome,
    runtime_s: f64,
    seed: u64,
}

impl CellRow {
    fn fields(&self) -> [String; 6] {
        let (ll, dof) = match &self.outcome {
            Outcome::Done { test_ll, dof } => (format!("{test_ll:.4}"), dof.to_string()),
            Outcome::Timeout => ("TIMEOUT".into(), "-".into()),
            Outcome::Error => ("ERROR".into(), "-".into()),
        };
        [
            self.dataset.clone(),
            self.method.name().to_string(),
            ll,
            format!("{:.2}", self.runtime_s),
            dof,
            self.seed.to_string(),
        ]
    }
}

const HEADER: [&str; 6] = ["dataset", "method", "test_ll", "runtime_s", "dof", "seed"];

fn render_plain(rows: &[CellRow]) -> String {
    let all: Vec<[String; 6]> = rows.iter().map(CellRow::fields).collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for fields in &all {
        for (w, f) in widths.iter_mut().zip(fields) {
            *w = (*w).max(f.len());
        }
    }
    let line = |fields: &[String]| -> String {
        fields
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{f:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&HEADER.map(String::from));
    out.push('\n');
    for fields in &all {
        out.push_str(&line(fields));
        out.push('\n');
    }
    out
}

fn render_tsv(rows: &[CellRow]) -> String {
    let mut out = HEADER.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.fields().join("\t"));
        out.push('\n');
    }
    out
}

pub fn cmd_bench(args: &BenchArgs) -> anyhow::Result<ExitCode> {
    let datasets: Vec<&str> = args
        .datasets
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if datasets.is_empty() {
        eprintln!("error: --datasets is empty");
        return Ok(ExitCode::from(2));
    }
    let mut methods = Vec::new();
    for tok in args.methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match Method::from_str(tok, true) {
            Ok(m) => methods.push(m),
            Err(_) => {
                eprintln!("error: unknown method {tok:?}");
                return Ok(ExitCode::from(2));
            }
        }
    }
    if methods.is_empty() {
        eprintln!("error: --methods is empty");
        return Ok(ExitCode::from(2));
    }

    let mut rows = Vec::new();
    for dataset in &datasets {
        let stem = args.data_dir.join(dataset);
        let trio = load_benchmark_triplet(&stem);
        for &method in &methods {
            let seed = cell_seed(args.seed, dataset, method);
            let row = match &trio {
                Err(e) => {
                    eprintln!("{dataset}/{}: {e}", method.name());
                    CellRow {
                        dataset: dataset.to_string(),
                        method,
                        outcome: Outcome::Error,
                        runtime_s: 0.0,
                        seed,
                    }
                }
                Ok((train_data, valid_data, test_data)) => {
                    let deadline = args
                        .timeout_s
                        .map(|s| Instant::now() + Duration::from_secs(s));
                    let started = Instant::now();
                    match train(method, train_data, valid_data, &args.thresholds, seed, deadline) {
                        Ok(trained) => {
                            let test_ll = trained.spn.mean_log_density(test_data.rows())?;
                            CellRow {
                                dataset: dataset.to_string(),
                                method,
                                outcome: Outcome::Done {
                                    test_ll,
                                    dof: trained.spn.num_free_parameters(),
                                },
                                runtime_s: trained.seconds,
                                seed,
                            }
                        }
                        Err(LearnError::Timeout) => CellRow {
                            dataset: dataset.to_string(),
                            method,
                            outcome: Outcome::Timeout,
                            runtime_s: started.elapsed().as_secs_f64(),
                            seed,
                        },
                        Err(e) => {
                            eprintln!("{dataset}/{}: {e}", method.name());
                            CellRow {
                                dataset: dataset.to_string(),
                                method,
                                outcome: Outcome::Error,
                                runtime_s: started.elapsed().as_secs_f64(),
                                seed,
                            }
                        }
                    }
                }
            };
            rows.push(row);
        }
    }

    let plain = render_plain(&rows);
    print!("{plain}");
    std::fs::write(&args.out, &plain)?;
    let tsv_path = args.out.with_extension("tsv");
    std::fs::write(&tsv_path, render_tsv(&rows))?;
    Ok(ExitCode::SUCCESS)
}
