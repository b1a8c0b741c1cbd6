use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use obtree::baselines::{fit_cart, fit_forest, ForestConfig};
use obtree_bench::synthetic;

fn cart(c: &mut Criterion) {
    let ds = synthetic(2000, 5, 4);
    let mut group = c.benchmark_group("fit_cart");
    for depth in [2, 6, 12] {
        group.bench_with_input(BenchmarkId::from_parameter(depth), &depth, |b, &d| {
            b.iter(|| fit_cart(&ds, d, 2).unwrap())
        });
    }
    group.finish();
}

fn forest(c: &mut Criterion) {
    let ds = synthetic(1000, 5, 4);
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    let cfg = ForestConfig {
        n_trees: 50,
        ..ForestConfig::default()
    };
    group.bench_function("fit_50_trees", |b| b.iter(|| fit_forest(&ds, &cfg).unwrap()));
    let model = fit_forest(&ds, &cfg).unwrap();
    group.bench_function("predict_50_trees", |b| b.iter(|| model.predict(&ds.features).unwrap()));
    group.finish();
}

criterion_group!(benches, cart, forest);
criterion_main!(benches);
