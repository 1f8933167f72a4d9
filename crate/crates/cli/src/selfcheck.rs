//! Oracle suites: closed forms against quadrature, derivative identities,
//! and the single-sample reduction to plain GAMP.

use calamp_core::channels::{
    CalibratedChannel, ChannelRow, DPrior, FaultyChannel, FaultyConditional, GainChannel, GainConditional, OutputChannel,
    QuadratureChannel,
};
use calamp_core::kernels::moments::{f_moments, BernoulliGaussWeight, GaussianWeight, PowerWeight};
use calamp_core::kernels::gauss::ln_gauss_pdf_unchecked;
use calamp_core::oracle::{complex_gain_row_quadrature, gamp_reference, marginal_gain_moments, ComplexBayesGain};
use calamp_core::solver::{initialize, iterate, Operator};
use calamp_core::synth::{generate, InstanceParams};
use calamp_core::channels::ChannelKind;
use calamp_core::{GainPrior, ProblemInstance, Scalar, SignalPrior, SolverConfig};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteReport {
    pub fn new(name: &str, cases: usize, max_residual: f64, tolerance: f64) -> Self {
        SuiteReport {
            name: name.into(),
            cases,
            max_residual,
            tolerance,
            passed: max_residual.is_finite() && max_residual <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} cases {:>5}  max residual {:.3e}  (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_residual,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub suites: Vec<SuiteReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelfcheckOptions {
    pub cases: usize,
    /// Cases for the 2-D complex quadrature, which is far slower per case.
    pub complex_cases: usize,
    pub gamp_instances: usize,
    pub seed: u64,
}

impl Default for SelfcheckOptions {
    fn default() -> Self {
        SelfcheckOptions { cases: 1000, complex_cases: 1000, gamp_instances: 20, seed: 2024 }
    }
}

/// Relative error with a floor on the reference magnitude.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn crel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub const ORACLE_TOLERANCE: f64 = 1e-6;
pub const DERIVATIVE_TOLERANCE: f64 = 1e-5;
pub const GAMP_TOLERANCE: f64 = 1e-12;
pub const CALIBRATED_TOLERANCE: f64 = 1e-10;

pub fn signal_prior_real(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let rho = rng.random_range(0.02..1.0);
        let sigma2 = rng.random_range(0.2..3.0);
        let xh = rng.random_range(-4.0..4.0);
        let xb = rng.random_range(0.01..2.0);
        let prior = SignalPrior::RealBernoulliGauss { rho, sigma2 };
        let (m, v) = prior.denoise(xh, xb);
        let (qm, qv) = f_moments(&BernoulliGaussWeight { rho, sigma2 }, xh, xb)?.posterior().unwrap_or((0.0, 0.0));
        worst = worst.max(rel(m, qm)).max(rel(v, qv));
    }
    Ok(SuiteReport::new("signal prior (real)", cases, worst, ORACLE_TOLERANCE))
}

/// The circular slab factorises into two real Gaussian integrals.
pub fn signal_prior_complex(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let rho = rng.random_range(0.02..1.0);
        let sigma2 = rng.random_range(0.2..3.0);
        let xh = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let xb = rng.random_range(0.01..2.0);
        let prior = SignalPrior::ComplexBernoulliGauss { rho, sigma2 };
        let (m, v) = prior.denoise(xh, xb);
        let slab = GaussianWeight { mean: 0.0, var: sigma2 / 2.0 };
        let re = f_moments(&slab, xh.re, xb / 2.0)?;
        let im = f_moments(&slab, xh.im, xb / 2.0)?;
        let w_slab = rho * re.f0 * im.f0;
        let w_atom = (1.0 - rho) * ln_gauss_pdf_unchecked(Complex64::new(0.0, 0.0), xh, xb).exp();
        let total = w_slab + w_atom;
        let share = w_slab / total;
        let qm = Complex64::new(re.f1 / re.f0, im.f1 / im.f0) * share;
        let second = share * (re.f2 / re.f0 + im.f2 / im.f0);
        let qv = second - qm.norm_sqr();
        worst = worst.max(crel(m, qm)).max(rel(v, qv));
    }
    Ok(SuiteReport::new("signal prior (complex)", cases, worst, ORACLE_TOLERANCE))
}

/// Uniform-prior gain update against quadrature of `tᴾ` on the support.
pub fn uniform_gain_update(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let w_d = rng.random_range(0.2..1.5);
        let prior = GainPrior::uniform(w_d);
        let (a, b) = prior.solver_support().unwrap_or((1.0, 1.0));
        let r = rng.random_range(a - 0.2..b + 0.2);
        let sigma = 10f64.powf(rng.random_range(-3.0..0.0));
        let p = rng.random_range(1u32..9);
        let e = prior.update_real(r, sigma, p)?;
        let (qm, qv) = f_moments(&PowerWeight { p, a, b }, r, sigma)?.posterior().unwrap_or((f64::NAN, f64::NAN));
        worst = worst.max(rel(e.mean, qm)).max(rel(e.var, qv));
    }
    Ok(SuiteReport::new("uniform gain update", cases, worst, ORACLE_TOLERANCE))
}

/// Radial complex-gain rule: phase of `R`, modulus from `tᴾ` on `[0, ∞)`.
pub fn complex_gain_update(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = GainPrior::ComplexNormal { complex_gain_variance: 10.0 };
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let r = Complex64::from_polar(rng.random_range(0.2..3.0), rng.random_range(-3.1..3.1));
        let sigma = 10f64.powf(rng.random_range(-3.0..0.0));
        let p = rng.random_range(1u32..9);
        let e = prior.update_complex(r, sigma, p)?;
        let (qm, _) =
            f_moments(&PowerWeight { p, a: 0.0, b: f64::INFINITY }, r.norm(), sigma)?.posterior().unwrap_or((f64::NAN, 0.0));
        worst = worst.max(crel(e.mean, r * (qm / r.norm()))).max(rel(e.var, sigma));
    }
    Ok(SuiteReport::new("complex gain update", cases, worst, ORACLE_TOLERANCE))
}

pub struct Row<S> {
    pub z: Vec<S>,
    pub zb: Vec<f64>,
    pub y: Vec<S>,
}

impl<S: Scalar> Row<S> {
    pub fn view(&self) -> ChannelRow<'_, S> {
        ChannelRow::new(&self.z, &self.zb, &self.y).expect("row lengths agree")
    }
}

/// A row near the generative model `y = (z + w)/d`.
pub fn gain_row(rng: &mut ChaCha8Rng, p: usize, delta: f64) -> Row<f64> {
    let d = rng.random_range(0.5..1.5);
    let mut row = Row { z: Vec::new(), zb: Vec::new(), y: Vec::new() };
    for _ in 0..p {
        let v: f64 = rng.random_range(0.05..0.6);
        let truth: f64 = rng.random_range(-1.5..1.5);
        row.z.push(truth + rng.random_range(-1.0..1.0) * v.sqrt());
        row.zb.push(v);
        row.y.push((truth + rng.random_range(-1.0..1.0) * delta.sqrt()) / d);
    }
    row
}

pub fn faulty_channel(channel: &FaultyChannel, cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = QuadratureChannel::new(
        FaultyConditional { m_f: channel.m_f, sigma_f: channel.sigma_f },
        DPrior::Atoms(vec![(0.0, channel.epsilon), (1.0, 1.0 - channel.epsilon)]),
    );
    let mut worst = 0.0f64;
    for k in 0..cases {
        let p = 1 + k % 5;
        let row = Row {
            z: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            zb: (0..p).map(|_| rng.random_range(0.01..1.0)).collect(),
            y: (0..p).map(|_| rng.random_range(-1.2..1.2)).collect(),
        };
        let l = k % p;
        let a = OutputChannel::<f64>::moments(channel, 0, l, &row.view())?;
        match oracle.full_moments(l, &row.view()) {
            Some(b) => worst = worst.max(rel(a.zhat, b.zhat)).max(rel(a.zbar, b.zbar)),
            None => worst = f64::INFINITY,
        }
    }
    Ok(SuiteReport::new("faulty channel", cases, worst, ORACLE_TOLERANCE))
}

/// `channel` against quadrature over `d` with noise `delta` and the prior
/// `prior`. A channel built with different constants fails this suite.
pub fn real_gain_channel(channel: &GainChannel, prior: GainPrior, delta: f64, cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = QuadratureChannel::new(GainConditional { delta }, DPrior::from_gain_prior(&prior)?);
    let mut worst = 0.0f64;
    for k in 0..cases {
        let p = 1 + k % 6;
        let row = gain_row(&mut rng, p, delta);
        let l = k % p;
        let a = channel.moments(0, l, &row.view())?;
        match (oracle.full_moments(l, &row.view()), a.gain) {
            (Some(b), Some(g)) => {
                worst = worst
                    .max(rel(a.zhat, b.zhat))
                    .max(rel(a.zbar, b.zbar))
                    .max(rel(g.mean, b.dhat))
                    .max(rel(g.var, b.dbar));
            }
            _ => worst = f64::INFINITY,
        }
    }
    Ok(SuiteReport::new("real gain channel", cases, worst, ORACLE_TOLERANCE))
}

/// Channel algebra on the complex field, with the gain posterior computed by
/// 2-D quadrature on both sides so only the algebra is under test.
pub fn complex_gain_channel(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior_var = 10.0;
    let mut worst = 0.0f64;
    for k in 0..cases {
        let delta = [0.05, 0.01][k % 2];
        let p = 1 + k % 3;
        let ch = GainChannel::new(delta, GainPrior::ComplexNormal { complex_gain_variance: prior_var })
            .with_update(ComplexBayesGain { prior_var });
        let d = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mut row = Row { z: Vec::new(), zb: Vec::new(), y: Vec::new() };
        for _ in 0..p {
            let truth = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            row.z.push(truth + Complex64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)));
            row.zb.push(rng.random_range(0.05..0.3));
            row.y.push(truth / d);
        }
        let view = row.view();
        let out = ch.moments(0, 0, &view)?;
        let Some((dh, db)) = ch.evidence(&view) else {
            worst = f64::INFINITY;
            continue;
        };
        let (zm, zv) = complex_gain_row_quadrature(&view, 0, delta, prior_var, dh, db);
        worst = worst.max(crel(out.zhat, zm)).max(rel(out.zbar, zv));
    }
    Ok(SuiteReport::new("complex gain channel", cases, worst, ORACLE_TOLERANCE))
}

fn channel_derivative<C: OutputChannel<f64>>(ch: &C, row: &Row<f64>, l: usize) -> Result<f64> {
    let h = 1e-5 * row.zb[l].sqrt();
    let at = |dz: f64| {
        let mut z = row.z.clone();
        z[l] += dz;
        ch.moments(0, l, &ChannelRow::new(&z, &row.zb, &row.y)?)
    };
    let slope = (at(h)?.zhat - at(-h)?.zhat) / (2.0 * h);
    let out = at(0.0)?;
    Ok((row.zb[l] * slope - out.zbar).abs() / out.zbar.max(1.0))
}

/// `Σ·∂f̂/∂R = f̄` for the signal priors and the uniform gain update, and
/// `Z̄·∂ẑ/∂Ẑ = z̄` for every output channel, by centred differences.
pub fn derivative_identities(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = GainChannel::new(1e-2, GainPrior::uniform(1.0));
    let faulty = FaultyChannel { epsilon: 0.2, m_f: 0.0, sigma_f: 0.2 };
    let cal = CalibratedChannel { delta: 0.05, d_cal: vec![1.2] };
    let mut worst = 0.0f64;
    for k in 0..cases {
        let rho = rng.random_range(0.05..1.0);
        let xh = rng.random_range(-3.0..3.0);
        let xb = rng.random_range(0.05..2.0);
        let prior = SignalPrior::real(rho);
        let h = 1e-5;
        let slope = (prior.denoise(xh + h, xb).0 - prior.denoise(xh - h, xb).0) / (2.0 * h);
        worst = worst.max((xb * slope - prior.denoise(xh, xb).1).abs());

        let cp = SignalPrior::complex(rho);
        let c = Complex64::new(xh, rng.random_range(-3.0..3.0));
        let d_re = (cp.denoise(c + h, xb).0 - cp.denoise(c - h, xb).0) / (2.0 * h);
        let ih = Complex64::new(0.0, h);
        let d_im = (cp.denoise(c + ih, xb).0 - cp.denoise(c - ih, xb).0) / (2.0 * h);
        let wirtinger = 0.5 * (d_re - Complex64::new(0.0, 1.0) * d_im);
        worst = worst.max((wirtinger * xb - cp.denoise(c, xb).1).norm());

        let gp = GainPrior::uniform(1.0);
        let r = rng.random_range(0.3..1.7);
        let sigma: f64 = rng.random_range(0.01..0.5);
        let p = rng.random_range(1u32..7);
        let hg = 1e-4 * sigma.sqrt();
        let gs = (gp.update_real(r + hg, sigma, p)?.mean - gp.update_real(r - hg, sigma, p)?.mean) / (2.0 * hg);
        let gv = gp.update_real(r, sigma, p)?.var;
        worst = worst.max((sigma * gs - gv).abs() / gv.max(1.0));

        let row = gain_row(&mut rng, 1 + k % 4, 1e-2);
        let l = k % row.z.len();
        worst = worst
            .max(channel_derivative(&gain, &row, l)?)
            .max(channel_derivative(&faulty, &row, l)?)
            .max(channel_derivative(&cal, &row, l)?);
    }
    Ok(SuiteReport::new("derivative identities", cases, worst, DERIVATIVE_TOLERANCE))
}

fn close<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> f64 {
    a.iter().zip(b.iter()).map(|(&u, &v)| (u - v).abs() / v.abs().max(1.0)).fold(0.0, f64::max)
}

/// Single-sample TAP iterates against an independently written GAMP loop
/// with the gain marginalised out, entrywise over the first 10 sweeps.
pub fn gamp_reduction(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..instances {
        let n = rng.random_range(20..80);
        let alpha = rng.random_range(0.4..1.2);
        let rho = rng.random_range(0.05..0.5);
        let delta = [1e-2, 1e-4, 1e-8][k % 3];
        let beta = if k % 2 == 0 { 1.0 } else { 0.8 };
        let gp = GainPrior::uniform(rng.random_range(0.3..1.5));
        let prior = SignalPrior::real(rho);
        let params = InstanceParams::new(n, alpha, 1, prior, ChannelKind::RealGain { delta, gain_prior: gp }, seed ^ k as u64)?;
        let inst: ProblemInstance<f64> = generate(&params)?;
        let ch = GainChannel::new(delta, gp);
        let config = SolverConfig::with_beta(beta);
        let op = Operator::new(inst.f.view());
        let mut state = initialize(inst.n(), inst.y.view(), &prior);
        let out = |_mu: usize, p: f64, tp: f64, y: f64| marginal_gain_moments(&gp, delta, p, tp, y);
        let trace = gamp_reference(inst.f.view(), inst.y.view(), &prior, &out, beta, config.variance_floor, 10)?;
        for g in &trace {
            iterate(&mut state, &op, inst.y.view(), &prior, &ch, &config)?;
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
    Ok(SuiteReport::new("GAMP reduction", instances, worst, GAMP_TOLERANCE))
}

/// A point-mass gain prior against the calibrated channel, row by row.
pub fn calibrated_reduction(cases: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d_cal = rng.random_range(0.3..2.0);
        let delta = 10f64.powf(rng.random_range(-8.0..-1.0));
        let pm = GainChannel::new(delta, GainPrior::PointMass { d_cal });
        let cal = CalibratedChannel { delta, d_cal: vec![d_cal] };
        let p = rng.random_range(1..6);
        let row = Row {
            z: (0..p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            zb: (0..p).map(|_| rng.random_range(1e-4..1.0)).collect(),
            y: (0..p).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let l = rng.random_range(0..p);
        let a = pm.moments(0, l, &row.view())?;
        let b = cal.moments(0, l, &row.view())?;
        worst = worst
            .max((a.zhat - b.zhat).abs() / b.zhat.abs().max(1.0))
            .max((a.zbar - b.zbar).abs() / b.zbar.abs().max(1.0));
    }
    Ok(SuiteReport::new("calibrated reduction", cases, worst, CALIBRATED_TOLERANCE))
}

pub fn run_all(opts: &SelfcheckOptions) -> Result<Report> {
    let s = opts.seed;
    let gp = GainPrior::uniform(1.0);
    let suites = vec![
        signal_prior_real(opts.cases, s)?,
        signal_prior_complex(opts.cases, s + 1)?,
        uniform_gain_update(opts.cases, s + 2)?,
        complex_gain_update(opts.cases, s + 3)?,
        faulty_channel(&FaultyChannel { epsilon: 0.2, m_f: 0.0, sigma_f: 0.2 }, opts.cases, s + 4)?,
        real_gain_channel(&GainChannel::new(1e-3, gp), gp, 1e-3, opts.cases, s + 5)?,
        complex_gain_channel(opts.complex_cases, s + 6)?,
        derivative_identities(opts.cases, s + 7)?,
        gamp_reduction(opts.gamp_instances, s + 8)?,
        calibrated_reduction(opts.cases, s + 9)?,
    ];
    Ok(Report { suites })
}
