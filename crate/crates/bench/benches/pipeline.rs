use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qnpe_core::classical::{run_classical_npe, ClassicalParams, NeighborRule};
use qnpe_core::harness::{default_scaling_dataset, DatasetKind, DatasetSpec};
use qnpe_core::pipeline::{run_quantum_npe, QnpeConfig};
use std::hint::black_box;

fn classical(c: &mut Criterion) {
    let mut group = c.benchmark_group("classical");
    for m in [64, 256] {
        let x = DatasetSpec::new(DatasetKind::SwissRoll, m, 3).generate().unwrap();
        let params = ClassicalParams {
            neighbors: NeighborRule::Knn(8),
            d: 2,
            alpha: None,
        };
        group.bench_with_input(BenchmarkId::from_parameter(m), &x, |b, x| {
            b.iter(|| run_classical_npe(black_box(x), &params).unwrap())
        });
    }
    group.finish();
}

fn quantum(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantum");
    group.sample_size(10);
    for m in [8, 16, 32] {
        let x = DatasetSpec {
            m,
            ..default_scaling_dataset()
        }
        .generate()
        .unwrap();
        let config = QnpeConfig::new(1.0, 2);
        group.bench_with_input(BenchmarkId::from_parameter(m), &x, |b, x| {
            b.iter(|| run_quantum_npe(black_box(x), &config).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, classical, quantum);
criterion_main!(benches);
