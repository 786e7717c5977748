//! Microbenchmarks for the hot paths: log-density evaluation, hard-EM
//! clustering, the pairwise dependency graph, and end-to-end learning.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use minispn_core::data::{generate_synthetic, Cell, Dataset, SynthSpec};
use minispn_core::learn::{
    dependency_graph, hard_em_two_clusters, learn, pareto_search, LearnConfig, ParetoConfig,
};
use minispn_core::spn::Spn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn split(data: &Dataset, every: usize) -> (Dataset, Dataset) {
    let (t, v): (Vec<usize>, Vec<usize>) = (0..data.n_rows()).partition(|r| r % every != 0);
    let take = |ids: &[usize]| {
        Dataset::new(
            data.schema().to_vec(),
            ids.iter().map(|&r| data.row(r).to_vec()),
        )
        .unwrap()
    };
    (take(&t), take(&v))
}

fn learned_model(n_vars: usize, n_rows: usize, seed: u64) -> (Spn, Dataset) {
    let synth = generate_synthetic(&SynthSpec {
        n_rows,
        n_discrete: n_vars,
        n_continuous: 0,
        missing_rate: 0.0,
        seed,
    })
    .unwrap();
    let (train, valid) = split(&synth.data, 5);
    let spn = learn(&train, &valid, &LearnConfig::default()).unwrap();
    (spn, synth.data)
}

fn bench_log_density(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_density");
    for &n_vars in &[8usize, 16, 32] {
        let (spn, data) = learned_model(n_vars, 4000, n_vars as u64);
        let rows: Vec<&[Cell]> = (0..data.n_rows().min(1000)).map(|r| data.row(r)).collect();
        group.throughput(Throughput::Elements(rows.len() as u64));
        group.bench_with_input(
            BenchmarkId::new("nodes", spn.node_count()),
            &rows,
            |b, rows| {
                b.iter(|| spn.mean_log_density(rows.iter().copied()).unwrap());
            },
        );
    }
    group.finish();
}

fn bench_hard_em(c: &mut Criterion) {
    let synth = generate_synthetic(&SynthSpec {
        n_rows: 5000,
        n_discrete: 16,
        n_continuous: 0,
        missing_rate: 0.0,
        seed: 3,
    })
    .unwrap();
    let slice = synth.data.full_slice();
    let config = LearnConfig::default();
    c.bench_function("hard_em_5000x16", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            hard_em_two_clusters(&slice, &config, &mut rng)
        });
    });
}

fn bench_dependency_graph(c: &mut Criterion) {
    let synth = generate_synthetic(&SynthSpec {
        n_rows: 4000,
        n_discrete: 24,
        n_continuous: 4,
        missing_rate: 0.3,
        seed: 5,
    })
    .unwrap();
    let slice = synth.data.full_slice();
    let config = LearnConfig::default();
    c.bench_function("dependency_graph_4000x28", |b| {
        b.iter(|| dependency_graph(&slice, &config));
    });
}

fn bench_learners(c: &mut Criterion) {
    let synth = generate_synthetic(&SynthSpec {
        n_rows: 4000,
        n_discrete: 12,
        n_continuous: 0,
        missing_rate: 0.0,
        seed: 8,
    })
    .unwrap();
    let (train, valid) = split(&synth.data, 5);
    let mut group = c.benchmark_group("learn_4000x12");
    group.sample_size(10);
    group.bench_function("minispn", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            learn(
                &train,
                &valid,
                &LearnConfig {
                    seed,
                    ..LearnConfig::default()
                },
            )
            .unwrap()
        });
    });
    group.bench_function("pareto_10x10", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            pareto_search(
                &train,
                &valid,
                &ParetoConfig {
                    iterations: 10,
                    seed,
                    ..ParetoConfig::default()
                },
                &LearnConfig::default(),
                None,
            )
            .unwrap()
        });
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_log_density,
    bench_hard_em,
    bench_dependency_graph,
    bench_learners
);
criterion_main!(kernels);
