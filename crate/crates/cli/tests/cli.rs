//! End-to-end tests of the command-line surface: exit codes, output
//! formats, and determinism guarantees.

use minispn_core::data::{write_benchmark_file, Cell, ColumnMeta, Dataset};
use minispn_core::spn::Spn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::{Command, Output};

fn minispn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minispn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Writes a train/valid/test trio of two-cluster binary data under `stem`.
fn write_cluster_trio(dir: &Path, stem: &str, n_train: usize, n_vars: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| {
        let schema: Vec<ColumnMeta> = (0..n_vars)
            .map(|i| ColumnMeta::discrete(format!("v{i}"), 2))
            .collect();
        let rows = (0..n).map(|i| {
            let p = if i % 2 == 0 { 0.9 } else { 0.1 };
            (0..n_vars)
                .map(|_| Cell::Discrete(u32::from(rng.gen::<f64>() < p)))
                .collect::<Vec<_>>()
        });
        Dataset::new(schema, rows).unwrap()
    };
    write_benchmark_file(&make(n_train), dir.join(format!("{stem}.ts.data"))).unwrap();
    write_benchmark_file(&make(n_train / 4), dir.join(format!("{stem}.valid.data"))).unwrap();
    write_benchmark_file(&make(n_train / 4), dir.join(format!("{stem}.test.data"))).unwrap();
}

fn uniform_product_model(n_vars: usize) -> String {
    let mut text = format!("spnmodel v1 vars={n_vars}\n");
    for v in 0..n_vars {
        text.push_str(&format!("leaf {v} cat {v} 0.5 0.5\n"));
    }
    let children: Vec<String> = (0..n_vars).map(|v| v.to_string()).collect();
    text.push_str(&format!("prod {n_vars} {}\n", children.join(" ")));
    text.push_str(&format!("root {n_vars}\n"));
    text
}

#[test]
fn learn_writes_a_model_and_a_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "toy", 400, 5, 1);
    let out = minispn(
        dir.path(),
        &["learn", "--method", "minispn", "--data", "toy", "--out", "m.spn", "--seed", "7"],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let summary = stdout(&out);
    for key in ["nodes=", "dof=", "train_ll=", "valid_ll=", "seconds="] {
        assert!(summary.contains(key), "summary {summary:?} misses {key}");
    }
    let spn = Spn::load(dir.path().join("m.spn")).unwrap();
    assert!(spn.validate().is_valid());
}

#[test]
fn unknown_method_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = minispn(
        dir.path(),
        &["learn", "--method", "bogus", "--data", "x", "--out", "m.spn"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = minispn(
        dir.path(),
        &["learn", "--method", "minispn", "--data", "nope", "--out", "m.spn"],
    );
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
}

#[test]
fn eval_uniform_product_model_gives_minus_n_ln2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.spn"), uniform_product_model(16)).unwrap();
    // any fully observed 16-column binary file scores -16 ln 2 per row
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<String> = (0..50)
        .map(|_| {
            (0..16)
                .map(|_| if rng.gen::<bool>() { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    std::fs::write(dir.path().join("d.data"), rows.join("\n") + "\n").unwrap();
    let out = minispn(dir.path(), &["eval", "--model", "u.spn", "--data", "d.data"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "-11.0904"); // -16 ln 2
}

#[test]
fn eval_single_row_equals_library_log_density() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "toy", 200, 4, 5);
    let out = minispn(
        dir.path(),
        &["learn", "--method", "minispn", "--data", "toy", "--out", "m.spn"],
    );
    assert_eq!(code(&out), 0);
    std::fs::write(dir.path().join("one.data"), "1,1,1,1\n").unwrap();
    let out = minispn(dir.path(), &["eval", "--model", "m.spn", "--data", "one.data"]);
    let spn = Spn::load(dir.path().join("m.spn")).unwrap();
    let expect = spn
        .log_density(&[Cell::Discrete(1); 4])
        .unwrap();
    assert_eq!(stdout(&out).trim(), format!("{expect:.4}"));
}

#[test]
fn eval_all_missing_file_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.spn"), uniform_product_model(3)).unwrap();
    std::fs::write(dir.path().join("m.csv"), "a,b,c\n?,?,?\n?,?,?\n").unwrap();
    let out = minispn(dir.path(), &["eval", "--model", "u.spn", "--data", "m.csv"]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(stdout(&out).trim(), "0.0000");
}

#[test]
fn eval_width_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.spn"), uniform_product_model(3)).unwrap();
    std::fs::write(dir.path().join("d.data"), "0,1\n").unwrap();
    let out = minispn(dir.path(), &["eval", "--model", "u.spn", "--data", "d.data"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn validate_accepts_good_and_rejects_corrupted_models() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("good.spn"), uniform_product_model(2)).unwrap();
    let out = minispn(dir.path(), &["validate", "--model", "good.spn"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "valid");

    // weights sum to 0.9
    let bad = "spnmodel v1 vars=1\n\
               leaf 0 cat 0 0.5 0.5\n\
               leaf 1 cat 0 0.2 0.8\n\
               sum 2 (0:0.5) (1:0.4)\n\
               root 2\n";
    std::fs::write(dir.path().join("bad.spn"), bad).unwrap();
    let out = minispn(dir.path(), &["validate", "--model", "bad.spn"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("weights sum to"), "{out:?}");

    std::fs::write(dir.path().join("trunc.spn"), "spnmodel v1 vars=1\nleaf 0 cat 0 0.5 0.5\n")
        .unwrap();
    let out = minispn(dir.path(), &["validate", "--model", "trunc.spn"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn sample_rejects_zero_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.spn"), uniform_product_model(2)).unwrap();
    let out = minispn(dir.path(), &["sample", "--model", "u.spn", "-n", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sample_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.spn"), uniform_product_model(4)).unwrap();
    let a = minispn(dir.path(), &["sample", "--model", "u.spn", "-n", "5", "--seed", "9"]);
    let b = minispn(dir.path(), &["sample", "--model", "u.spn", "-n", "5", "--seed", "9"]);
    assert_eq!(code(&a), 0);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 6); // header + 5 rows
}

#[test]
fn sampled_marginals_match_the_model() {
    let dir = tempfile::tempdir().unwrap();
    // mixture with distinct marginals: p(v=1) = 0.3*0.9 + 0.7*0.2 = 0.41
    let model = "spnmodel v1 vars=2\n\
                 leaf 0 cat 0 0.1 0.9\n\
                 leaf 1 cat 1 0.4 0.6\n\
                 prod 2 0 1\n\
                 leaf 3 cat 0 0.8 0.2\n\
                 leaf 4 cat 1 0.7 0.3\n\
                 prod 5 3 4\n\
                 sum 6 (2:0.3) (5:0.7)\n\
                 root 6\n";
    std::fs::write(dir.path().join("m.spn"), model).unwrap();
    let out = minispn(
        dir.path(),
        &["sample", "--model", "m.spn", "-n", "100000", "--seed", "4"],
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut ones = [0usize; 2];
    let mut n = 0usize;
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for (v, c) in cells.iter().enumerate() {
            if *c == "1" {
                ones[v] += 1;
            }
        }
        n += 1;
    }
    assert_eq!(n, 100_000);
    // analytic marginals from the mixture
    let expect = [0.3 * 0.9 + 0.7 * 0.2, 0.3 * 0.6 + 0.7 * 0.3];
    for v in 0..2 {
        let p = expect[v];
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let observed = ones[v] as f64 / n as f64;
        assert!(
            (observed - p).abs() <= 3.0 * se,
            "var {v}: observed {observed}, expected {p}"
        );
    }
}

/// The tsv table with the runtime column blanked out.
fn tsv_without_runtime(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split('\t').collect();
            if fields.len() == 6 {
                fields[3] = "";
            }
            fields.join("\t")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn bench_is_deterministic_and_order_independent() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "alpha", 400, 5, 11);
    write_cluster_trio(dir.path(), "beta", 300, 4, 13);
    let run = |name: &str, datasets: &str| {
        let out = minispn(
            dir.path(),
            &[
                "bench", "--datasets", datasets, "--methods", "minispn,pareto,hybrid",
                "--data-dir", ".", "--seed", "7", "--out", name,
            ],
        );
        assert_eq!(code(&out), 0, "{out:?}");
    };
    run("r1.txt", "alpha,beta");
    run("r2.txt", "alpha,beta");
    assert_eq!(
        tsv_without_runtime(&dir.path().join("r1.tsv")),
        tsv_without_runtime(&dir.path().join("r2.tsv"))
    );

    // per-cell numbers do not depend on the dataset order
    run("r3.txt", "beta,alpha");
    let parse_cells = |path: &Path| {
        let mut cells: Vec<Vec<String>> = tsv_without_runtime(path)
            .lines()
            .skip(1)
            .map(|l| l.split('\t').map(String::from).collect())
            .collect();
        cells.sort();
        cells
    };
    assert_eq!(
        parse_cells(&dir.path().join("r1.tsv")),
        parse_cells(&dir.path().join("r3.tsv"))
    );

    // human and machine tables carry identical numbers
    let human = std::fs::read_to_string(dir.path().join("r1.txt")).unwrap();
    for line in std::fs::read_to_string(dir.path().join("r1.tsv")).unwrap().lines().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        for f in &fields {
            assert!(human.contains(f), "human table misses {f:?}");
        }
    }
}

#[test]
fn bench_empty_dataset_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = minispn(dir.path(), &["bench", "--datasets", "", "--out", "b.txt"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_unresolvable_stem_marks_error_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "ok", 200, 4, 17);
    let out = minispn(
        dir.path(),
        &[
            "bench", "--datasets", "ghost,ok", "--methods", "minispn", "--data-dir", ".",
            "--out", "b.txt",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let tsv = std::fs::read_to_string(dir.path().join("b.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ghost\tminispn\tERROR"));
    assert!(lines[2].starts_with("ok\tminispn\t-"));
}

#[test]
fn bench_timeout_marks_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "slow", 4000, 10, 19);
    let out = minispn(
        dir.path(),
        &[
            "bench", "--datasets", "slow", "--methods", "minispn", "--data-dir", ".",
            "--timeout-s", "0", "--out", "b.txt",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let tsv = std::fs::read_to_string(dir.path().join("b.tsv")).unwrap();
    assert!(tsv.lines().nth(1).unwrap().contains("TIMEOUT"), "{tsv}");
}

#[test]
fn synth_writes_csv_and_ground_truth_next_to_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = minispn(
        dir.path(),
        &[
            "synth", "--out", "d.csv", "--rows", "100", "--discrete", "3",
            "--continuous", "1", "--missing-rate", "0.2", "--seed", "3",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    assert!(dir.path().join("d.csv").exists());
    let truth = Spn::load(dir.path().join("d.spn")).unwrap();
    assert_eq!(truth.n_vars(), 4);
}

#[test]
fn decision_log_is_written_and_replays_soundly() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "toy", 600, 5, 23);
    let out = minispn(
        dir.path(),
        &[
            "learn", "--method", "minispn", "--data", "toy", "--out", "m.spn",
            "--seed", "2", "--decision-log", "log.tsv",
        ],
    );
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    let log = minispn_core::learn::DecisionLog::parse_tsv(&text).unwrap();
    assert!(!log.records.is_empty());
    assert!(log.validation_gate_holds());
}

#[test]
fn front_trace_is_written_for_pareto() {
    let dir = tempfile::tempdir().unwrap();
    write_cluster_trio(dir.path(), "toy", 300, 4, 29);
    let out = minispn(
        dir.path(),
        &[
            "learn", "--method", "pareto", "--data", "toy", "--out", "m.spn",
            "--iterations", "5", "--front-trace", "front.tsv",
        ],
    );
    assert_eq!(code(&out), 0, "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("front.tsv")).unwrap();
    assert!(text.starts_with("iteration\tdof\tvalid_ll\n"));
    assert!(text.lines().count() > 1);
}
