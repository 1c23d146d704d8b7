use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tmmsb::data::{baseline_hierarchical, to_counts};
use tmmsb::inference::elbo;
use tmmsb::metrics::{rank_at_full_recall, soft_bcubed};
use tmmsb::{fit, FitConfig};
use tmmsb_bench::{fixed_config, network};

fn fit_iterations(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_3_iterations");
    g.sample_size(10);
    for &(m, n, k) in &[(50, 250, 2), (50, 250, 8), (100, 500, 4), (100, 1000, 4)] {
        let log = network(m, n, k, 1);
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("M{m}_N{n}_K{k}")),
            &log,
            |b, log| b.iter(|| fit(log, &fixed_config(k, 3)).unwrap()),
        );
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let log = network(100, 500, 4, 2);
    let model = fit(&log, &FitConfig::with_k(4)).unwrap();
    let alpha = model.config.alpha();
    c.bench_function("elbo_M100_N500_K4", |b| {
        b.iter(|| elbo(&model.state, &log, &alpha, model.config.clamp_eps).unwrap())
    });
    c.bench_function("soft_bcubed_M100_K4", |b| {
        b.iter(|| soft_bcubed(&model.memberships, &model.memberships).unwrap())
    });
    c.bench_function("rank_at_full_recall_M100_N500", |b| {
        b.iter(|| rank_at_full_recall(&model, &log).unwrap())
    });
    let counts = to_counts(&log);
    c.bench_function("baseline_M100_K4", |b| {
        b.iter(|| baseline_hierarchical(&counts, 4, 1e-9).unwrap())
    });
}

criterion_group!(benches, fit_iterations, evaluation);
criterion_main!(benches);
