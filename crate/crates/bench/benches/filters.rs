use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use projfilter_bench::{cubic_sensor, observations, prior};
use projfilter_core::filter::run_filter;
use projfilter_core::FilterKind;

fn filter_steps(c: &mut Criterion) {
    let model = cubic_sensor();
    let theta = prior();
    let mut g = c.benchmark_group("filter_step");
    for kind in FilterKind::ALL {
        let f = kind.build(&model);
        g.bench_function(kind.to_string(), |b| b.iter(|| f.step(black_box(&theta), 1e-3, black_box(0.01)).unwrap()));
    }
    g.finish();
}

fn filter_runs(c: &mut Criterion) {
    let model = cubic_sensor();
    let dys = observations(1e-3, 200, 1);
    let mut g = c.benchmark_group("filter_run_200_steps");
    g.sample_size(10);
    for kind in [FilterKind::Ekf, FilterKind::Adf, "jet_l2".parse().unwrap(), "strat_hell".parse().unwrap()] {
        let f = kind.build(&model);
        g.bench_function(kind.to_string(), |b| b.iter(|| run_filter(f.as_ref(), &prior(), 1e-3, black_box(&dys))));
    }
    g.finish();
}

criterion_group!(benches, filter_steps, filter_runs);
criterion_main!(benches);
