use std::hint::black_box;

use asyncdual::constants::{choose_gammas, constants_for, PhiDenominator};
use asyncdual::harness::experiment::preset_schedule;
use asyncdual::oracle::solve_reference;
use asyncdual::problem::dual_value_and_gradient;
use asyncdual::sim::{dry_run, run_async, RunOptions};
use asyncdual::{primal_response, DualPoint};
use asyncdual_bench::ieee14_fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const HORIZON: u64 = 5_000;

fn constants(c: &mut Criterion) {
    let f = ieee14_fixture();
    c.bench_function("constants_for/ieee14", |b| {
        b.iter(|| constants_for(black_box(&f.problem), PhiDenominator::Owner).unwrap())
    });
    c.bench_function("choose_gammas/ieee14", |b| b.iter(|| choose_gammas(black_box(&f.table), 50, 0.99, 1.0).unwrap()));
}

fn dual(c: &mut Criterion) {
    let f = ieee14_fixture();
    let y = DualPoint::zeros(&f.problem);
    c.bench_function("primal_response/ieee14", |b| b.iter(|| primal_response(&f.problem, black_box(&y)).unwrap()));
    c.bench_function("dual_value_and_gradient/ieee14", |b| {
        b.iter(|| dual_value_and_gradient(&f.problem, black_box(&y)).unwrap())
    });
    let mut group = c.benchmark_group("reference");
    group.sample_size(10);
    group.bench_function("solve_reference/ieee14", |b| b.iter(|| solve_reference(black_box(&f.problem)).unwrap()));
    group.finish();
}

fn engine(c: &mut Criterion) {
    let f = ieee14_fixture();
    let mut group = c.benchmark_group("engine");
    group.sample_size(10);
    for q in [1u64, 25, 100] {
        let preset = preset_schedule(f.problem.graph(), q, 0, HORIZON).unwrap();
        let gammas = choose_gammas(&f.table, preset.realized_q, 0.99, 1.0).unwrap();
        let options = RunOptions { reference: Some(f.reference.x_star.clone()), record_every: 100, ..RunOptions::default() };
        group.bench_with_input(BenchmarkId::new("dry_run", q), &preset, |b, p| b.iter(|| dry_run(&p.timeline).unwrap()));
        group.bench_with_input(BenchmarkId::new("run_async", q), &preset, |b, p| {
            b.iter(|| run_async(&f.problem, &gammas, &p.timeline, &options).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, constants, dual, engine);
criterion_main!(benches);
