use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use blotto_core::equilibrium::{asymmetric_ne, best_response_oracle, expected_protection_exact};
use blotto_core::{enumerate_actions, resolve_slot, Allocation, DataSizeVector, GameConfig};

fn enumeration(c: &mut Criterion) {
    c.bench_function("enumerate 16 cpus over 3 devices", |b| {
        b.iter(|| enumerate_actions(black_box(16), 3, 1).unwrap())
    });
    c.bench_function("enumerate 10 cpus over 10 devices step 2", |b| {
        b.iter(|| enumerate_actions(black_box(10), 10, 2).unwrap())
    });
}

fn resolution(c: &mut Criterion) {
    let data = DataSizeVector::from_values(&[0.5, 0.75, 1.0], 12).unwrap();
    let m = Allocation::new(vec![6, 6, 4], 16).unwrap();
    let n = Allocation::new(vec![1, 0, 3], 4).unwrap();
    c.bench_function("resolve slot", |b| b.iter(|| resolve_slot(black_box(&data), &m, &n).unwrap()));
}

fn equilibrium(c: &mut Criterion) {
    let config = GameConfig::new(3, 9, 6, 4, 1).unwrap();
    let data = DataSizeVector::uniform(3, 4, 4).unwrap();
    let (x, y) = asymmetric_ne(&config).unwrap();
    c.bench_function("exact protection 9 vs 6", |b| {
        b.iter(|| expected_protection_exact(black_box(&x), &y, &data).unwrap())
    });
    c.bench_function("best response 9 vs 6", |b| {
        b.iter(|| best_response_oracle(black_box(&y), &data, 9, 1).unwrap())
    });
}

criterion_group!(benches, enumeration, resolution, equilibrium);
criterion_main!(benches);
