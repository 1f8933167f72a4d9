use std::hint::black_box;

use calamp_core::kernels::{power_weight_moments, regularized_lower_gamma, weighted_gaussian_integral};
use calamp_core::{GainPrior, SignalPrior};
use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

fn gamma(c: &mut Criterion) {
    c.bench_function("regularized_lower_gamma", |b| {
        b.iter(|| regularized_lower_gamma(black_box(4.5), black_box(3.2)))
    });
}

fn weighted(c: &mut Criterion) {
    c.bench_function("weighted_gaussian_integral n=4", |b| {
        b.iter(|| weighted_gaussian_integral(black_box(4), black_box(1.1), black_box(0.05), 0.45, 1.55))
    });
    c.bench_function("power_weight_moments tiny sigma", |b| {
        b.iter(|| power_weight_moments(black_box(8), black_box(0.9), black_box(1e-9), 0.45, 1.55))
    });
}

fn denoisers(c: &mut Criterion) {
    let real = SignalPrior::real(0.2);
    let complex = SignalPrior::complex(0.2);
    c.bench_function("denoise real", |b| b.iter(|| real.denoise(black_box(0.7), black_box(0.1))));
    c.bench_function("denoise complex", |b| {
        b.iter(|| complex.denoise(black_box(Complex64::new(0.7, -0.2)), black_box(0.1)))
    });
    let gain = GainPrior::uniform(1.0);
    c.bench_function("uniform gain update P=4", |b| {
        b.iter(|| gain.update_real(black_box(1.02), black_box(0.01), 4))
    });
}

criterion_group!(benches, gamma, weighted, denoisers);
criterion_main!(benches);
