use calamp_core::channels::ChannelKind;
use calamp_core::synth::{gen_matrix, gen_observation, gen_signal, generate, stream_rng, InstanceParams, Stream};
use calamp_core::{GainPrior, ProblemInstance, SignalPrior};
use ndarray::Array2;
use num_complex::Complex64;

fn mean_abs2<S: calamp_core::Scalar>(a: impl Iterator<Item = S>) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for v in a {
        s += v.abs2();
        k += 1;
    }
    s / k as f64
}

#[test]
fn real_matrix_entry_variance() {
    let n = 10_000;
    let f: Array2<f64> = gen_matrix(200, n, &mut stream_rng(1, Stream::Matrix));
    let v = mean_abs2(f.iter().copied()) * n as f64;
    assert!((v - 1.0).abs() < 0.02, "N·var = {v}");
    let mean = f.mean().unwrap() * (n as f64).sqrt();
    assert!(mean.abs() < 0.01, "scaled mean {mean}");
}

#[test]
fn complex_matrix_is_circular() {
    let n = 10_000;
    let f: Array2<Complex64> = gen_matrix(100, n, &mut stream_rng(2, Stream::Matrix));
    let k = f.len() as f64;
    let re = f.iter().map(|c| c.re * c.re).sum::<f64>() / k * n as f64;
    let im = f.iter().map(|c| c.im * c.im).sum::<f64>() / k * n as f64;
    let cross = f.iter().map(|c| c.re * c.im).sum::<f64>() / k * n as f64;
    assert!((re - 0.5).abs() < 0.01 && (im - 0.5).abs() < 0.01, "re {re} im {im}");
    assert!(cross.abs() < 0.01, "cross {cross}");
}

#[test]
fn column_norms_approach_one() {
    let n = 500;
    let f: Array2<f64> = gen_matrix(20_000, n, &mut stream_rng(3, Stream::Matrix));
    let norms: Vec<f64> = f.columns().into_iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).collect();
    let mean = norms.iter().sum::<f64>() / n as f64 / 20_000.0 * n as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean column norm² × N/M = {mean}");
}

#[test]
fn dense_signal_variance() {
    let prior = SignalPrior::RealBernoulliGauss { rho: 1.0, sigma2: 2.5 };
    let x: Array2<f64> = gen_signal(20_000, 2, &prior, &mut stream_rng(4, Stream::Signal));
    let v = mean_abs2(x.iter().copied());
    assert!((v / 2.5 - 1.0).abs() < 0.05, "variance {v}");
    let xc: Array2<Complex64> = gen_signal(20_000, 1, &SignalPrior::complex(1.0), &mut stream_rng(4, Stream::Signal));
    let vc = mean_abs2(xc.iter().copied());
    assert!((vc - 1.0).abs() < 0.05, "complex variance {vc}");
}

#[test]
fn zero_density_gives_zero_signal() {
    let x: Array2<f64> = gen_signal(100, 3, &SignalPrior::real(0.0), &mut stream_rng(5, Stream::Signal));
    assert!(x.iter().all(|&v| v == 0.0));
}

#[test]
fn nonzero_fraction_within_three_sigma() {
    for (k, &rho) in [0.05, 0.2, 0.5, 0.9].iter().enumerate() {
        let n = 40_000usize;
        let x: Array2<f64> = gen_signal(n, 1, &SignalPrior::real(rho), &mut stream_rng(6 + k as u64, Stream::Signal));
        let nz = x.iter().filter(|&&v| v != 0.0).count() as f64;
        let sd = (n as f64 * rho * (1.0 - rho)).sqrt();
        assert!((nz - n as f64 * rho).abs() < 3.0 * sd, "rho {rho}: {nz} nonzero");
    }
}

#[test]
fn faulty_rows_match_working_row_variance() {
    let rho = 0.2;
    let params = InstanceParams::new(
        1000,
        2.0,
        20,
        SignalPrior::real(rho),
        ChannelKind::Faulty { epsilon: 0.5, m_f: 0.0, sigma_f: None },
        11,
    )
    .unwrap();
    let inst: ProblemInstance<f64> = generate(&params).unwrap();
    let (mut faulty, mut working) = (Vec::new(), Vec::new());
    for (mu, row) in inst.y.rows().into_iter().enumerate() {
        let bucket = if inst.d_true[mu] == 0.0 { &mut faulty } else { &mut working };
        bucket.extend(row.iter().copied());
    }
    let vf = mean_abs2(faulty.into_iter());
    let vw = mean_abs2(working.into_iter());
    assert!((vf / vw - 1.0).abs() < 0.05, "faulty {vf} working {vw}");
    assert!((vw / rho - 1.0).abs() < 0.1, "working {vw}");
}

#[test]
fn faultiness_is_constant_across_samples() {
    let params =
        InstanceParams::new(200, 1.0, 5, SignalPrior::real(0.3), ChannelKind::Faulty { epsilon: 0.3, m_f: 0.0, sigma_f: None }, 12)
            .unwrap();
    let inst: ProblemInstance<f64> = generate(&params).unwrap();
    let z = inst.f.dot(&inst.x_true);
    for mu in 0..inst.m() {
        let same = (0..inst.p()).filter(|&l| inst.y[[mu, l]] == z[[mu, l]]).count();
        if inst.d_true[mu] == 0.0 {
            assert_eq!(same, 0);
        } else {
            assert_eq!(same, inst.p());
        }
    }
}

#[test]
fn calibrated_equals_point_mass_gain() {
    let prior = SignalPrior::real(0.3);
    let cal = generate::<f64>(&InstanceParams::new(150, 0.8, 3, prior, ChannelKind::Calibrated { delta: 1e-3 }, 13).unwrap()).unwrap();
    let pm = generate::<f64>(
        &InstanceParams::new(150, 0.8, 3, prior, ChannelKind::RealGain { delta: 1e-3, gain_prior: GainPrior::PointMass { d_cal: 1.0 } }, 13)
            .unwrap(),
    )
    .unwrap();
    assert_eq!(cal.y, pm.y);
    assert_eq!(cal.d_true, pm.d_true);

    // A general d_cal through the observation step directly.
    let f: Array2<f64> = gen_matrix(40, 60, &mut stream_rng(14, Stream::Matrix));
    let x: Array2<f64> = gen_signal(60, 2, &prior, &mut stream_rng(14, Stream::Signal));
    let obs = gen_observation(
        &f,
        &x,
        &ChannelKind::RealGain { delta: 0.0, gain_prior: GainPrior::PointMass { d_cal: 2.0 } },
        0.3,
        &mut stream_rng(14, Stream::Gains),
        &mut stream_rng(14, Stream::Noise),
    )
    .unwrap();
    assert!(obs.d_true.iter().all(|&d| d == 2.0));
    assert_eq!(obs.y, obs.z.mapv(|v| v / 2.0));
}

#[test]
fn gains_come_from_the_uninflated_prior() {
    let params = InstanceParams::new(
        2000,
        1.0,
        1,
        SignalPrior::real(0.2),
        ChannelKind::RealGain { delta: 1e-15, gain_prior: GainPrior::uniform(1.0) },
        15,
    )
    .unwrap();
    let inst: ProblemInstance<f64> = generate(&params).unwrap();
    let (lo, hi) = inst.d_true.iter().fold((f64::MAX, f64::MIN), |(a, b), &d| (a.min(d), b.max(d)));
    assert!(lo >= 0.5 && hi <= 1.5, "[{lo}, {hi}]");
    assert!(lo < 0.51 && hi > 1.49, "[{lo}, {hi}]");
}

#[test]
fn fixed_seed_is_bit_identical() {
    for kind in [
        ChannelKind::Faulty { epsilon: 0.2, m_f: 0.1, sigma_f: Some(0.3) },
        ChannelKind::RealGain { delta: 1e-6, gain_prior: GainPrior::uniform(0.8) },
        ChannelKind::Calibrated { delta: 1e-4 },
    ] {
        let params = InstanceParams::new(120, 0.7, 2, SignalPrior::real(0.25), kind, 99).unwrap();
        let a: ProblemInstance<f64> = generate(&params).unwrap();
        let b: ProblemInstance<f64> = generate(&params).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.x_true, b.x_true);
        assert_eq!(a.d_true, b.d_true);
        assert_eq!(a.y, b.y);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_to(&mut buf_a).unwrap();
        b.write_to(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }
    let params = InstanceParams::new(
        80,
        0.7,
        2,
        SignalPrior::complex(0.25),
        ChannelKind::ComplexGain { delta: 1e-6, gain_prior: GainPrior::ComplexNormal { complex_gain_variance: 10.0 } },
        7,
    )
    .unwrap();
    let a: ProblemInstance<Complex64> = generate(&params).unwrap();
    let b: ProblemInstance<Complex64> = generate(&params).unwrap();
    assert_eq!(a.y, b.y);
    assert_eq!(a.d_true, b.d_true);
}
