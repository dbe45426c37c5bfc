use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fishbridge_core::calibrate::{fit, generate_synthetic, normalize_days, FitOptions, NormalizeOptions, SyntheticOptions};
use fishbridge_core::control::{solve_limit, solve_penalized};
use fishbridge_core::moments::{closed_series, moment_ode};
use fishbridge_core::simulate::{PathEnsemble, StepPlan};
use fishbridge_core::ApplicationParams;

const P: ApplicationParams = ApplicationParams::IDENTIFIED_2023;

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| k as f64 / n as f64).collect()
}

fn control(c: &mut Criterion) {
    let model = P.model(1.0);
    let weight = model.weight().unwrap();
    let g = grid(200);
    c.bench_function("solve_penalized/200", |b| {
        b.iter(|| solve_penalized(&weight, &model.source, black_box(1e-2), &g).unwrap())
    });
    c.bench_function("solve_limit/200", |b| b.iter(|| solve_limit(&weight, &model.source, black_box(&g)).unwrap()));
}

fn moments(c: &mut Criterion) {
    let model = P.model(1.0);
    let mut g = grid(100);
    g.push(1.0);
    c.bench_function("closed_series/101", |b| b.iter(|| closed_series(&P, black_box(&g)).unwrap()));
    c.bench_function("moment_ode/101", |b| b.iter(|| moment_ode(&model, black_box(&g)).unwrap()));
}

fn simulate(c: &mut Criterion) {
    let model = P.model(1.0);
    let mut group = c.benchmark_group("bridge_ensemble");
    group.sample_size(10);
    for dt in [1e-3, 1e-4] {
        let plan = StepPlan::bridge(&model, dt).unwrap();
        group.bench_with_input(BenchmarkId::new("1000_paths", dt), &plan, |b, plan| {
            b.iter(|| PathEnsemble::simulate(plan, 1000, black_box(7)).unwrap())
        });
    }
    group.finish();
}

fn calibrate(c: &mut Criterion) {
    let opts = SyntheticOptions { count_scale: 1e4, dt: 1e-3, ..SyntheticOptions::default() };
    let data = generate_synthetic(&P.model(1.0), 120, 84, 3, &opts).unwrap();
    let norm = normalize_days(&data.raw, &data.sun, &NormalizeOptions::default()).unwrap();
    let mut group = c.benchmark_group("calibrate");
    group.sample_size(10);
    group.bench_function("fit/120_days", |b| b.iter(|| fit(black_box(&norm), &FitOptions::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, control, moments, simulate, calibrate);
criterion_main!(benches);
