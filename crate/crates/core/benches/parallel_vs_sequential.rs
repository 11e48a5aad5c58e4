use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use segflow::asymptotics::EigenOptions;
use segflow::flow::{FlowParams, FlowState, Stepper};
use segflow::frequency::{probe_many, RadiiPolicy, SyntheticSource, TargetMetric};
use segflow::grid::{build_grid, Geometry, Grid, ScalarField};
use segflow::oracle::{optimal_partition_2d_search, LineFamily};
use segflow::sigma::normalize_components;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("default", ThreadPoolBuilder::new().build().unwrap()),
        ("one_thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench_probes(c: &mut Criterion) {
    let grid = Arc::new(Grid::new(1, &[-4.0], &[8.0], &[1601], Geometry::Box).unwrap());
    let src = SyntheticSource::new(grid, (-1.0, 0.0), |x, t| vec![x[0] * x[0] + 2.0 * t]);
    let bases: Vec<(Vec<f64>, f64)> = (0..16).map(|k| (vec![-1.5 + 0.2 * k as f64], 0.0)).collect();
    let mut group = c.benchmark_group("probe_many");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| probe_many(&src, black_box(&bases), &RadiiPolicy::Geometric, TargetMetric::Euclidean)))
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let grid = build_grid(2, &[1.0, 1.0], &[33, 33], Geometry::Box).unwrap();
    let mut group = c.benchmark_group("oracle_2d_search");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    optimal_partition_2d_search(&grid, 2, LineFamily::AxisAlignedLines, 4, EigenOptions::default()).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bench_flow_step(c: &mut Criterion) {
    // Large enough that the per-component work is fanned out.
    let grid = build_grid(2, &[1.0, 1.0], &[129, 129], Geometry::Box).unwrap();
    let tent = |s: f64, lo: f64, hi: f64| (1.0 - (s - 0.5 * (lo + hi)).abs() / (0.5 * (hi - lo))).max(0.0);
    let mut u = vec![
        ScalarField::from_fn(&grid, |x| tent(x[0], 0.0, 0.5) * tent(x[1], 0.0, 1.0)),
        ScalarField::from_fn(&grid, |x| tent(x[0], 0.5, 1.0) * tent(x[1], 0.0, 1.0)),
    ];
    normalize_components(&mut u, &[1.0, 1.0]).unwrap();
    let params = FlowParams::new(vec![1.0, 1.0], 0.05, 1.0);
    let dt = params.step_cap(&grid, &u);
    let stepper = Stepper::new(&grid, &params, dt).unwrap();
    let state = FlowState::new(u, 0.0, params.epsilon, &params.c).unwrap();
    let mut group = c.benchmark_group("flow_step_2d");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| stepper.step(black_box(&state)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_probes, bench_oracle, bench_flow_step);
criterion_main!(benches);
