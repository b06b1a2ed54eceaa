use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pwamc::builtin_example;
use pwamc::moments::{build_localizing_template, build_moment_template, instantiate, MomentBasis, MomentVector};
use pwamc::relaxation::{assemble, solve_order, RelaxationOptions};
use pwamc_bench::random_dense;

fn polynomials(c: &mut Criterion) {
    let p = random_dense(2, 6, 1);
    let q = random_dense(2, 6, 2);
    c.bench_function("multiply 2 vars degree 6", |b| b.iter(|| p.multiply(&q).unwrap()));
    c.bench_function("eval 2 vars degree 6", |b| b.iter(|| p.eval_at(&[0.3, -0.7])));
}

fn moment_matrices(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment matrix");
    for d in [2u32, 4, 6] {
        let t = build_moment_template(2, d);
        let basis = Arc::new(MomentBasis::new(2, 2 * d));
        let y = MomentVector::new(Arc::clone(&basis), (0..basis.len()).map(|k| 1.0 / (1 + k) as f64).collect());
        group.bench_with_input(BenchmarkId::new("template", d), &d, |b, &d| b.iter(|| build_moment_template(2, d)));
        group.bench_with_input(BenchmarkId::new("instantiate", d), &d, |b, _| b.iter(|| instantiate(&t, &y).unwrap()));
    }
    let g = random_dense(2, 2, 3);
    group.bench_function("localizing template d=4", |b| b.iter(|| build_localizing_template(&g, 2, 4).unwrap()));
    group.finish();
}

fn relaxations(c: &mut Criterion) {
    let ocp = builtin_example();
    let opts = RelaxationOptions::default();
    let mut group = c.benchmark_group("relaxation");
    group.sample_size(10);
    for d in [2u32, 4, 6] {
        group.bench_with_input(BenchmarkId::new("assemble", d), &d, |b, &d| b.iter(|| assemble(&ocp, d, &opts).unwrap()));
    }
    for d in [2u32, 4] {
        group.bench_with_input(BenchmarkId::new("solve", d), &d, |b, &d| b.iter(|| solve_order(&ocp, d, &opts).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, polynomials, moment_matrices, relaxations);
criterion_main!(benches);
