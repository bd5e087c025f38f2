use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use uwise_bench::logistic_batch;
use uwise_core::{BaseKind, GradientSpec, ObjectiveKind, SeedTree, DEFAULT_CAP};

fn gradient_estimators(c: &mut Criterion) {
    let (_model, batch) = logistic_batch(16, 5);
    let mut group = c.benchmark_group("gradients_n16_m8");
    let specs = [
        GradientSpec::new(ObjectiveKind::Standard, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Permuted { ell: 20 }, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Permuted { ell: 20 }, BaseKind::Dreg),
        GradientSpec::new(ObjectiveKind::Complete { cap: DEFAULT_CAP }, BaseKind::Reparam),
        GradientSpec::new(ObjectiveKind::Approx2, BaseKind::Reparam),
    ];
    for spec in specs {
        group.bench_function(BenchmarkId::from_parameter(spec.label()), |b| {
            let mut rng = SeedTree::new(6).rng();
            b.iter(|| spec.evaluate(black_box(&batch), 8, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradient_estimators);
criterion_main!(benches);
