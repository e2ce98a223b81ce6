use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ttreg::estimators::{fit, FitConfig, Method};
use ttreg::par::{self, Parallelism};
use ttreg::simbench::{generate, run_grid, Model, SimConfig};

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4).max(2)
}

fn replicate_grid(c: &mut Criterion) {
    let mut cfg = SimConfig::defaults(Model::M1);
    cfg.replicates = 8;
    let fc = FitConfig::default();
    let mut group = c.benchmark_group("apl_grid_8_reps");
    group.sample_size(10);
    for (name, p) in [("sequential", Parallelism::Sequential), ("threads", Parallelism::Threads(threads()))] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &p, |b, &p| {
            b.iter(|| run_grid(std::slice::from_ref(&cfg), &[Method::Apl], &fc, p).unwrap())
        });
    }
    group.finish();
}

fn ost_cv(c: &mut Criterion) {
    let cfg = SimConfig::defaults(Model::M1);
    let data = generate(&cfg, 0).unwrap().dataset;
    let fc = FitConfig::default();
    let mut group = c.benchmark_group("ost_single_fit");
    group.sample_size(10);
    for (name, p) in [("sequential", Parallelism::Sequential), ("threads", Parallelism::Threads(threads()))] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &p, |b, &p| {
            b.iter(|| par::install(p, || fit(&data, Method::Ost, &fc).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, replicate_grid, ost_cv);
criterion_main!(benches);
