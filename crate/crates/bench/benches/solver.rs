use calamp_bench::{complex_gain_channel, gain_channel, instance};
use calamp_core::channels::ChannelKind;
use calamp_core::solver::{initialize, iterate, Operator};
use calamp_core::{ProblemInstance, Scalar, SignalPrior, SolverConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64;

fn bench_iterate<S: Scalar>(c: &mut Criterion, name: &str, inst: &ProblemInstance<S>, channel: ChannelKind) {
    let prior = inst.params.prior;
    let ch = channel.build::<S>(&vec![S::from_re(1.0); inst.m()], prior.variance()).unwrap();
    let op = Operator::new(inst.f.view());
    let config = SolverConfig::with_beta(channel.default_damping());
    let mut warm = initialize(inst.n(), inst.y.view(), &prior);
    for _ in 0..5 {
        iterate(&mut warm, &op, inst.y.view(), &prior, ch.as_ref(), &config).unwrap();
    }
    c.bench_function(name, |b| {
        b.iter_batched(
            || warm.clone(),
            |mut state| iterate(&mut state, &op, inst.y.view(), &prior, ch.as_ref(), &config).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn solver(c: &mut Criterion) {
    let channel = gain_channel(1e-15);
    let real: ProblemInstance<f64> = instance(1000, 0.6, 4, SignalPrior::real(0.2), channel);
    bench_iterate(c, "iterate gain N=1000 P=4", &real, channel);

    let faulty = ChannelKind::Faulty { epsilon: 0.2, m_f: 0.0, sigma_f: None };
    let inst: ProblemInstance<f64> = instance(1000, 0.6, 4, SignalPrior::real(0.2), faulty);
    bench_iterate(c, "iterate faulty N=1000 P=4", &inst, faulty);

    let channel = complex_gain_channel(1e-15);
    let complex: ProblemInstance<Complex64> = instance(500, 0.7, 4, SignalPrior::complex(0.2), channel);
    bench_iterate(c, "iterate complex gain N=500 P=4", &complex, channel);
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = solver
}
criterion_main!(benches);
