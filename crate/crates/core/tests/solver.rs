use calamp_core::channels::{CalibratedChannel, ChannelKind, ChannelRow, GainChannel, OutputChannel};
use calamp_core::oracle::{bp_solve, gamp_reference, marginal_gain_moments};
use calamp_core::solver::{initialize, iterate, Operator};
use calamp_core::synth::{generate, InstanceParams};
use calamp_core::{cross_correlation, solve, GainPrior, ProblemInstance, Scalar, SignalPrior, SolverConfig};
use ndarray::{s, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> f64 {
    a.iter().zip(b.iter()).map(|(&u, &v)| (u - v).abs() / v.abs().max(1.0)).fold(0.0, f64::max)
}

fn real_instance(n: usize, alpha: f64, p: usize, rho: f64, channel: ChannelKind, seed: u64) -> ProblemInstance<f64> {
    generate(&InstanceParams::new(n, alpha, p, SignalPrior::real(rho), channel, seed).unwrap()).unwrap()
}

fn gain(delta: f64, w_d: f64) -> ChannelKind {
    ChannelKind::RealGain { delta, gain_prior: GainPrior::uniform(w_d) }
}

#[test]
fn single_sample_matches_reference_gamp() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let n = rng.random_range(20..80);
        let alpha = rng.random_range(0.4..1.2);
        let rho = rng.random_range(0.05..0.5);
        let delta = [1e-2, 1e-4, 1e-8][k % 3];
        let beta = if k % 2 == 0 { 1.0 } else { 0.8 };
        let inst = real_instance(n, alpha, 1, rho, gain(delta, 1.0), 100 + k as u64);
        let prior = SignalPrior::real(rho);
        let gp = GainPrior::uniform(1.0);
        let ch = GainChannel::new(delta, gp);
        let config = SolverConfig::with_beta(beta);
        let op = Operator::new(inst.f.view());
        let mut state = initialize(inst.n(), inst.y.view(), &prior);
        let out = |_mu: usize, p: f64, tp: f64, y: f64| marginal_gain_moments(&gp, delta, p, tp, y);
        let trace =
            gamp_reference(inst.f.view(), inst.y.view(), &prior, &out, beta, config.variance_floor, 10).unwrap();
        for g in &trace {
            iterate(&mut state, &op, inst.y.view(), &prior, &ch, &config).unwrap();
            worst = worst
                .max(close(&state.x_hat, &g.x_hat))
                .max(close(&state.x_bar, &g.x_bar))
                .max(close(&state.lin_hat, &g.p))
                .max(close(&state.lin_bar, &g.tau_p))
                .max(close(&state.cav_hat, &g.r))
                .max(close(&state.cav_bar, &g.tau_r))
                .max(close(&state.z_hat, &g.z_hat));
        }
    }
    assert!(worst < 1e-12, "worst entrywise deviation {worst}");
}

#[test]
fn point_mass_gain_equals_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let d_cal = 1.3;
    let pm = GainChannel::new(1e-3, GainPrior::PointMass { d_cal });
    let cal = CalibratedChannel { delta: 1e-3, d_cal: vec![d_cal] };
    for _ in 0..1000 {
        let p = rng.random_range(1..6);
        let zh: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let zb: Vec<f64> = (0..p).map(|_| rng.random_range(1e-4..1.0)).collect();
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let row = ChannelRow::new(&zh, &zb, &y).unwrap();
        let l = rng.random_range(0..p);
        let a = pm.moments(0, l, &row).unwrap();
        let b = cal.moments(0, l, &row).unwrap();
        assert!((a.zhat - b.zhat).abs() <= 1e-10 * b.zhat.abs().max(1.0));
        assert!((a.zbar - b.zbar).abs() <= 1e-10 * b.zbar.abs().max(1.0));
    }

    let inst = real_instance(200, 0.6, 3, 0.2, gain(1e-3, 0.0), 5);
    let prior = SignalPrior::real(0.2);
    let config = SolverConfig { t_max: 40, ..SolverConfig::default() };
    let a = solve(inst.f.view(), inst.y.view(), &prior, &GainChannel::new(1e-3, GainPrior::PointMass { d_cal: 1.0 }), &config)
        .unwrap();
    let b = solve(inst.f.view(), inst.y.view(), &prior, &CalibratedChannel { delta: 1e-3, d_cal: vec![1.0; inst.m()] }, &config)
        .unwrap();
    assert!(close(&a.x_hat, &b.x_hat) < 1e-10);
    assert!(close(&a.z_hat, &b.z_hat) < 1e-10);
}

#[test]
fn calibrated_samples_decouple() {
    let inst = real_instance(150, 0.5, 3, 0.2, ChannelKind::Calibrated { delta: 1e-4 }, 6);
    let prior = SignalPrior::real(0.2);
    let ch = CalibratedChannel { delta: 1e-4, d_cal: vec![1.0; inst.m()] };
    // A tolerance no sweep can reach keeps the iteration counts equal.
    let config = SolverConfig { t_max: 25, tol: f64::MIN_POSITIVE, ..SolverConfig::default() };
    let joint = solve(inst.f.view(), inst.y.view(), &prior, &ch, &config).unwrap();
    for l in 0..3 {
        let y = inst.y.slice(s![.., l..l + 1]);
        let single = solve(inst.f.view(), y, &prior, &ch, &config).unwrap();
        let col = joint.x_hat.slice(s![.., l..l + 1]).to_owned();
        assert!(close(&col, &single.x_hat) < 1e-10);
    }
}

#[test]
fn zero_measurements_any_channel() {
    let prior = SignalPrior::real(0.2);
    let f = real_instance(50, 0.6, 2, 0.2, ChannelKind::Calibrated { delta: 0.0 }, 7).f;
    let y = Array2::<f64>::zeros((f.nrows(), 2));
    let channels: Vec<Box<dyn OutputChannel<f64>>> = vec![
        gain(1e-15, 1.0).build(&[], 0.2).unwrap(),
        ChannelKind::Faulty { epsilon: 0.2, m_f: 0.0, sigma_f: None }.build(&[], 0.2).unwrap(),
        ChannelKind::Calibrated { delta: 0.0 }.build(&vec![1.0; f.nrows()], 0.2).unwrap(),
    ];
    for ch in &channels {
        let r = solve(f.view(), y.view(), &prior, ch.as_ref(), &SolverConfig::with_beta(0.8)).unwrap();
        assert!(r.x_hat.iter().all(|&v| v == 0.0));
    }
}

fn calibrated_recovery(n: usize, alpha: f64, p: usize, rho: f64, seed: u64) -> (f64, bool) {
    let inst = real_instance(n, alpha, p, rho, ChannelKind::Calibrated { delta: 0.0 }, seed);
    let ch = CalibratedChannel { delta: 0.0, d_cal: inst.d_true.to_vec() };
    let r = solve(inst.f.view(), inst.y.view(), &SignalPrior::real(rho), &ch, &SolverConfig::default()).unwrap();
    (cross_correlation(inst.x_true.view(), r.x_hat.view()).unwrap().mu, r.converged)
}

#[test]
fn noiseless_compressed_sensing_recovers() {
    let (mu, converged) = calibrated_recovery(1000, 0.6, 1, 0.2, 11);
    assert!(mu > 1.0 - 1e-8, "mu = {mu}");
    assert!(converged);
    let (mu, _) = calibrated_recovery(1000, 1.0, 1, 0.1, 12);
    assert!(mu > 1.0 - 1e-8, "mu = {mu}");
}

#[test]
fn real_gain_recovers_in_easy_cell() {
    let inst = real_instance(1000, 0.65, 4, 0.2, gain(1e-15, 1.0), 7);
    let ch = GainChannel::new(1e-15, GainPrior::uniform(1.0));
    let r = solve(inst.f.view(), inst.y.view(), &SignalPrior::real(0.2), &ch, &SolverConfig::with_beta(0.8)).unwrap();
    let score = cross_correlation(inst.x_true.view(), r.x_hat.view()).unwrap();
    assert!(score.success(), "log10 gap {} after {} sweeps", score.log10_gap, r.iterations);
    let d = r.d_hat.unwrap();
    assert_eq!(d.len(), inst.m());
    // Gains are recovered up to a common scale.
    let dc = d.clone().insert_axis(Axis(1));
    let dt = inst.d_true.clone().insert_axis(Axis(1));
    let gain_mu = cross_correlation(dt.view(), dc.view()).unwrap().mu;
    assert!(gain_mu > 0.999, "gain correlation {gain_mu}");
}

#[test]
fn converged_state_is_a_fixed_point() {
    let inst = real_instance(400, 0.7, 2, 0.15, ChannelKind::Calibrated { delta: 1e-3 }, 13);
    let prior = SignalPrior::real(0.15);
    let ch = CalibratedChannel { delta: 1e-3, d_cal: vec![1.0; inst.m()] };
    let config = SolverConfig::default();
    let r = solve(inst.f.view(), inst.y.view(), &prior, &ch, &config).unwrap();
    assert!(r.converged);
    let mut state = r.state.clone();
    let op = Operator::new(inst.f.view());
    iterate(&mut state, &op, inst.y.view(), &prior, &ch, &config).unwrap();
    let change = (&state.x_hat - &r.x_hat).mapv(f64::abs).mean().unwrap();
    assert!(change < 10.0 * config.tol.sqrt(), "change {change}");
    let mean_sq = (&state.x_hat - &r.x_hat).mapv(|v| v * v).mean().unwrap();
    assert!(mean_sq < 10.0 * config.tol, "mean square change {mean_sq}");
}

#[test]
fn variances_stay_nonnegative() {
    let inst = real_instance(200, 0.5, 3, 0.2, gain(1e-15, 1.0), 14);
    let r = solve(
        inst.f.view(),
        inst.y.view(),
        &SignalPrior::real(0.2),
        &GainChannel::new(1e-15, GainPrior::uniform(1.0)),
        &SolverConfig { t_max: 60, ..SolverConfig::with_beta(0.8) },
    )
    .unwrap();
    assert!(r.history.iter().all(|d| d.min_variance >= 0.0));
}

#[test]
fn belief_propagation_recovers_tiny_instance() {
    let inst = real_instance(32, 0.9, 1, 0.1, ChannelKind::Calibrated { delta: 0.0 }, 15);
    let ch = CalibratedChannel { delta: 0.0, d_cal: vec![1.0; inst.m()] };
    let r = bp_solve(inst.f.view(), inst.y.view(), &SignalPrior::real(0.1), &ch, &SolverConfig::with_beta(0.8)).unwrap();
    let mu = cross_correlation(inst.x_true.view(), r.x_hat.view()).unwrap().mu;
    assert!(mu > 1.0 - 1e-6, "mu = {mu}");
}

#[test]
fn tap_agrees_with_belief_propagation_calibrated() {
    let inst = real_instance(128, 0.9, 1, 0.1, ChannelKind::Calibrated { delta: 1e-2 }, 16);
    let prior = SignalPrior::real(0.1);
    let ch = CalibratedChannel { delta: 1e-2, d_cal: vec![1.0; inst.m()] };
    let config = SolverConfig { t_max: 300, tol: 1e-12, ..SolverConfig::default() };
    let tap = solve(inst.f.view(), inst.y.view(), &prior, &ch, &config).unwrap();
    let bp = bp_solve(inst.f.view(), inst.y.view(), &prior, &ch, &config).unwrap();
    assert!(tap.converged && bp.converged);
    let rms = ((&tap.x_hat - &bp.x_hat).mapv(|v| v * v).mean().unwrap()).sqrt();
    assert!(rms < 1e-2, "rms {rms}");
}

#[test]
fn complex_gain_recovers_up_to_phase() {
    let params = InstanceParams::new(
        300,
        0.8,
        4,
        SignalPrior::complex(0.2),
        ChannelKind::ComplexGain { delta: 1e-15, gain_prior: GainPrior::ComplexNormal { complex_gain_variance: 10.0 } },
        17,
    )
    .unwrap();
    let inst: ProblemInstance<Complex64> = generate(&params).unwrap();
    let ch = params.channel.build::<Complex64>(&[], 0.2).unwrap();
    let r = solve(inst.f.view(), inst.y.view(), &params.prior, ch.as_ref(), &SolverConfig::with_beta(0.8)).unwrap();
    let score = cross_correlation(inst.x_true.view(), r.x_hat.view()).unwrap();
    assert!(score.success(), "log10 gap {}", score.log10_gap);
    assert_eq!(r.x_hat.len_of(Axis(1)), 4);
}
