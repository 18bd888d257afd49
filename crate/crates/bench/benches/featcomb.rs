use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tcn_core::featcomb::{
    combine_backward, enumerate_subsets, transform_dataset, DEFAULT_MAX_COMBINED,
};
use tcn_core::{Approach, CombinationSpec, Matrix2D, Rng};

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("transform_dataset");
    let mut rng = Rng::new(0);
    for (n, m) in [(10, 2), (10, 3), (20, 2), (20, 3)] {
        let x = Matrix2D::new(256, n, rng.normal(256 * n, 0.0, 1.0).unwrap()).unwrap();
        for approach in [Approach::Multiplicative, Approach::PairwiseSum] {
            let spec = CombinationSpec::new(m, approach);
            group.bench_with_input(
                BenchmarkId::new(approach.to_string(), format!("n{n}_m{m}")),
                &x,
                |b, x| b.iter(|| transform_dataset(black_box(x), &spec).unwrap()),
            );
        }
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let x = rng.normal(12, 0.0, 1.0).unwrap();
    let subsets = enumerate_subsets(12, 3, DEFAULT_MAX_COMBINED).unwrap();
    let up = rng.normal(subsets.len(), 0.0, 1.0).unwrap();
    c.bench_function("combine_backward_n12_m3", |b| {
        b.iter(|| combine_backward(black_box(&x), &subsets, Approach::Multiplicative, &up).unwrap())
    });
}

criterion_group!(benches, transform, backward);
criterion_main!(benches);
