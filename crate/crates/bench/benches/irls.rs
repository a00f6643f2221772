use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dropsvm_bench::{corpus, dropout_rows};
use dropsvm_core::wls::{solve_closed_form, solve_quasi_newton, LbfgsOptions};
use dropsvm_core::{
    train_dropout_logistic, train_dropout_svm, train_mcf_quadratic, HingeConfig, LogisticConfig, McfConfig,
    ModelParams, NoiseSpec, WlsProblem,
};

fn trainers(c: &mut Criterion) {
    let data = corpus(1000, 200);
    let noise = NoiseSpec::Dropout { q: 0.5 };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("dropout-svm", |b| {
        let cfg = HingeConfig { c: 0.1, ..HingeConfig::default() };
        b.iter(|| train_dropout_svm(&data, &noise, &cfg).unwrap())
    });
    group.bench_function("dropout-logistic", |b| {
        let cfg = LogisticConfig { c: 0.1, ..LogisticConfig::default() };
        b.iter(|| train_dropout_logistic(&data, &noise, &cfg).unwrap())
    });
    group.bench_function("mcf-quadratic", |b| {
        let cfg = McfConfig { c: 0.1, ..McfConfig::default() };
        b.iter(|| train_mcf_quadratic(&data, &noise, &cfg).unwrap())
    });
    group.finish();
}

fn m_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("m-step");
    group.sample_size(10);
    for dim in [110, 400] {
        let data = corpus(1000, dim);
        let rows = dropout_rows(&data, 0.5);
        let weights = vec![0.05; rows.len()];
        let problem = WlsProblem::new(dim, true, &rows, weights, data.labels().to_vec(), 1.0).unwrap();
        group.bench_with_input(BenchmarkId::new("closed-form", dim), &problem, |b, p| {
            b.iter(|| solve_closed_form(p).unwrap())
        });
        let start = ModelParams::zeros(dim);
        let opts = LbfgsOptions::default();
        group.bench_with_input(BenchmarkId::new("quasi-newton", dim), &problem, |b, p| {
            b.iter(|| solve_quasi_newton(p, &start, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trainers, m_step);
criterion_main!(benches);
