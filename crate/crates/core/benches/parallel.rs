//! Single-thread versus multi-thread timings of the hot kernels.
//!
//! `cargo bench -p morrey-core` compares a one-thread rayon pool against the
//! default pool. `cargo bench -p morrey-core --no-default-features` runs the
//! sequential build, where both variants take the plain iterator path.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use morrey_core::conditions::{condition_b_sup, BlockBattery};
use morrey_core::experiments::{sparse_fuzz, spiky_field, FuzzSettings};
use morrey_core::norms::{lpl_norm, ExponentSet};
use morrey_core::operators::{fractional_integral, fractional_maximal};
use morrey_core::weights::PowerWeightSpec;
use morrey_core::{exec, Fidelity, Grid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn mode() -> &'static str {
    if exec::is_parallel() {
        "parallel-build"
    } else {
        "sequential-build"
    }
}

fn kernels(c: &mut Criterion) {
    let g = Grid::new(1, 10).unwrap();
    let f = spiky_field(g, &mut ChaCha8Rng::seed_from_u64(5));
    let g2 = Grid::new(2, 6).unwrap();
    let f2 = spiky_field(g2, &mut ChaCha8Rng::seed_from_u64(6));
    let mut group = c.benchmark_group(format!("kernels/{}", mode()));
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("morrey_norm_aligned_1d_L10", name), |b| {
            pool.install(|| b.iter(|| lpl_norm(black_box(&f), 2.0, 0.5, Fidelity::Aligned).unwrap()))
        });
        group.bench_function(BenchmarkId::new("fractional_maximal_2d_L6", name), |b| {
            pool.install(|| b.iter(|| fractional_maximal(black_box(&f2), 0.5, Fidelity::Aligned).unwrap()))
        });
        group.bench_function(BenchmarkId::new("fractional_integral_1d_L10", name), |b| {
            pool.install(|| b.iter(|| fractional_integral(black_box(&f), 0.5).unwrap()))
        });
    }
    group.finish();
}

fn experiments(c: &mut Criterion) {
    let e = ExponentSet::coupled(1, 2.0, 4.0, 0.125).unwrap();
    let battery = BlockBattery::new(1, 8, e.lambda).unwrap();
    let w = PowerWeightSpec::new(0.25, [0.5, 0.5]).rasterize(Grid::new(1, 8).unwrap()).unwrap();
    let fuzz = FuzzSettings { instances: 20, ..Default::default() };
    let mut group = c.benchmark_group(format!("experiments/{}", mode()));
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("sparse_fuzz_20", name), |b| {
            pool.install(|| b.iter(|| sparse_fuzz(black_box(&fuzz)).unwrap()))
        });
        group.bench_function(BenchmarkId::new("b_quantity_sup_L8", name), |b| {
            pool.install(|| b.iter(|| condition_b_sup(black_box(&w), &e, Fidelity::Aligned, &battery).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, experiments);
criterion_main!(benches);
