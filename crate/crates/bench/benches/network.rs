//! Benchmarks of the network paths: a forward pass, one training epoch,
//! and the confidence-distribution computation.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dg_bench::dataset;
use dg_core::network::{
    delta_x_distribution, train, ActivationKind, BatchMode, MlpModel, OptimizerKind, TrainOptions,
};

fn model() -> MlpModel {
    MlpModel::init(&[2, 32, 32, 2], ActivationKind::LeakyRelu(0.01), 5).expect("valid dims")
}

fn bench_forward(c: &mut Criterion) {
    let m = model();
    let x = [0.3, -0.7];
    c.bench_function("forward_2x32x32x2", |b| {
        b.iter(|| m.forward(black_box(&x)).expect("forward"))
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let ds = dataset(1_000);
    let opts = TrainOptions {
        epochs: 1,
        optimizer: OptimizerKind::adam(1e-2),
        batch: BatchMode::Minibatch { size: 32 },
        softmax_base: std::f64::consts::E,
        seed: 9,
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch_1k_points", |b| {
        b.iter_with_setup(model, |mut m| {
            train(&mut m, black_box(&ds), black_box(&opts)).expect("train")
        })
    });
    group.finish();
}

fn bench_delta_x(c: &mut Criterion) {
    let ds = dataset(10_000);
    let m = model();
    c.bench_function("delta_x_distribution_10k", |b| {
        b.iter(|| delta_x_distribution(black_box(&m), black_box(&ds)).expect("delta_x"))
    });
}

criterion_group!(benches, bench_forward, bench_train_epoch, bench_delta_x);
criterion_main!(benches);
