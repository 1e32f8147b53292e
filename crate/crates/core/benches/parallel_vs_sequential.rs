//! Rayon maps against the sequential fallback on two representative loads.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use svspec::exec;
use svspec::potential::MatrixPotential;
use svspec::scalartools::{discrete_hilbert, HilbertKind};
use svspec::spectrum::{locate_all, SpectrumConfig};

fn modes() -> [(&'static str, bool); 2] {
    [("sequential", false), ("parallel", true)]
}

fn hilbert(c: &mut Criterion) {
    let a: Vec<f64> = (1..=200).map(|n| 1.0 / n as f64).collect();
    let mut g = c.benchmark_group("discrete_hilbert");
    for (name, on) in modes() {
        g.bench_function(BenchmarkId::new(name, 20_000), |b| {
            exec::set_parallel(on);
            b.iter(|| discrete_hilbert(black_box(&a), HilbertKind::HalfShifted, 20_000))
        });
    }
    g.finish();
}

fn spectrum(c: &mut Criterion) {
    let v = MatrixPotential::random_trig(2, 2, 1.0, 3);
    let cfg = SpectrumConfig::with_tol(1e-10);
    let mut g = c.benchmark_group("locate_all");
    g.sample_size(10);
    for (name, on) in modes() {
        g.bench_function(BenchmarkId::new(name, 2000), |b| {
            exec::set_parallel(on);
            b.iter(|| locate_all(black_box(&v), 2000.0, &cfg).unwrap())
        });
    }
    g.finish();
    exec::set_parallel(true);
}

criterion_group!(benches, hilbert, spectrum);
criterion_main!(benches);
