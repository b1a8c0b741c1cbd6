use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use obtree::softgrad::soft_loss_and_grad;
use obtree::{LeafMode, RegularizationConfig, ScaleFactor};
use obtree_bench::{initial_tree, synthetic};

fn soft_gradient(c: &mut Criterion) {
    let ds = synthetic(2000, 5, 4);
    let alpha = ScaleFactor::new(50.0).unwrap();
    let reg = RegularizationConfig::new(0.0).unwrap();
    let mut group = c.benchmark_group("soft_loss_and_grad");
    for depth in [2, 4, 6] {
        for mode in [LeafMode::Constant, LeafMode::Linear] {
            let tree = initial_tree(&ds, depth, mode);
            group.bench_with_input(BenchmarkId::new(mode.to_string(), depth), &tree, |b, t| {
                b.iter(|| soft_loss_and_grad(t, &ds, alpha, reg).unwrap())
            });
        }
    }
    group.finish();
}

fn hard_routing(c: &mut Criterion) {
    let ds = synthetic(2000, 5, 4);
    let mut group = c.benchmark_group("hard_route");
    for depth in [2, 4, 6] {
        let tree = initial_tree(&ds, depth, LeafMode::Constant);
        group.bench_with_input(BenchmarkId::new("product_form", depth), &tree, |b, t| {
            b.iter(|| t.hard_route(&ds.features).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("predict", depth), &tree, |b, t| {
            b.iter(|| t.predict(&ds.features).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, soft_gradient, hard_routing);
criterion_main!(benches);
