use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use sbra_bench::multihop_topology;
use sbra_core::controllers::{sbra_probabilities, SbraTransform};
use sbra_core::oracle::{dp_optimal_cost, grid_argmax_myopic, TinyInstance};
use sbra_core::topology::PairIndex;

fn bench_sbra(c: &mut Criterion) {
    let (topology, sessions) = multihop_topology();
    let pairs = PairIndex::new(&topology, &sessions);
    let weights: Vec<f64> = (0..pairs.len()).map(|i| (i % 5) as f64).collect();
    let nonempty: Vec<bool> = (0..pairs.len()).map(|i| i % 3 != 0).collect();
    let mut out = vec![0.0; pairs.len()];

    let mut group = c.benchmark_group("sbra_probabilities");
    for (name, transform) in [
        ("linear", SbraTransform::Linear),
        ("square", SbraTransform::Square),
        ("exponential", SbraTransform::Exponential),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                sbra_probabilities(
                    black_box(&weights),
                    black_box(&nonempty),
                    &pairs,
                    transform,
                    &mut out,
                )
            })
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    c.bench_function("oracle/grid_argmax_1e-3", |b| {
        b.iter(|| black_box(grid_argmax_myopic(2, 1.5, 0.3, 1.0, 0.7, 1e-3)))
    });

    let instance = TinyInstance {
        horizon: 5,
        buffer_cap: 5,
        grid_step: 0.01,
        channel_dist: vec![(0, 0.2), (1, 0.5), (2, 0.3)],
        arrival_dist: vec![(0, 0.6), (1, 0.4)],
        alpha: 1.0,
        beta: 0.3,
        delta: 0.5,
        energy: 1.0,
        initial_backlog: 2,
    };
    c.bench_function("oracle/dp_h5_b5_g0.01", |b| {
        b.iter(|| dp_optimal_cost(black_box(&instance)).unwrap().value)
    });
}

criterion_group!(benches, bench_sbra, bench_oracle);
criterion_main!(benches);
