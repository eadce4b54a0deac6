//! Pipeline stages on a 64^3 phantom, run inside a 1-thread pool and an
//! N-thread pool. Build with `--no-default-features` to time the sequential
//! fallback instead of rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cutseg::{
    build_graph, corrupt_probabilities, edge_map, evaluate, generate_phantom, max_flow_min_cut,
    segment, MetricParams, PhantomSpec, SegmentParams,
};

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let n = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .max(2);
    [1, n]
        .into_iter()
        .map(|t| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap();
            (t, pool)
        })
        .collect()
}

fn stages(c: &mut Criterion) {
    let spec = PhantomSpec::default().with_seed(1);
    let case = corrupt_probabilities(&generate_phantom(&spec).unwrap(), 0.95).unwrap();
    let params = SegmentParams::default();
    let graph = build_graph(&case.probs, &params).unwrap();
    let cut = max_flow_min_cut(&graph).labels;
    let metric = MetricParams::voxel_size(case.gt.spacing());

    let mut group = c.benchmark_group("pipeline-64");
    group.sample_size(10);
    for (threads, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("phantom", threads), &spec, |b, s| {
            b.iter(|| pool.install(|| generate_phantom(black_box(s)).unwrap()))
        });
        group.bench_with_input(
            BenchmarkId::new("build_graph", threads),
            &case.probs,
            |b, p| b.iter(|| pool.install(|| build_graph(black_box(p), &params).unwrap())),
        );
        group.bench_with_input(BenchmarkId::new("segment", threads), &case.probs, |b, p| {
            b.iter(|| pool.install(|| segment(black_box(p), &params).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("edge_map", threads), &case.gt, |b, l| {
            b.iter(|| pool.install(|| edge_map(black_box(l))))
        });
        group.bench_with_input(BenchmarkId::new("evaluate", threads), &cut, |b, l| {
            b.iter(|| pool.install(|| evaluate(black_box(l), &case.gt, &metric).unwrap()))
        });
    }
    group.bench_function("max_flow", |b| {
        b.iter(|| max_flow_min_cut(black_box(&graph)))
    });
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
