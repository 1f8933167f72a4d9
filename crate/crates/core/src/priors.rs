//! Signal and calibration priors with their posterior-moment updates.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::gauss::{floor_variance, ln_gauss_pdf_unchecked};
use crate::kernels::weighted::power_weight_moments;
use crate::scalar::{Field, Scalar};

fn one() -> f64 {
    1.0
}

pub const DEFAULT_INFLATION: f64 = 1.1;
pub const DEFAULT_COMPLEX_GAIN_VARIANCE: f64 = 10.0;

fn default_inflation() -> f64 {
    DEFAULT_INFLATION
}

fn default_complex_gain_variance() -> f64 {
    DEFAULT_COMPLEX_GAIN_VARIANCE
}

/// Logistic function evaluated without overflow.
#[inline]
pub(crate) fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli-Gauss signal prior `(1−ρ)δ(x) + ρ𝒩(x;0,σ²)`, on either field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalPrior {
    RealBernoulliGauss {
        rho: f64,
        #[serde(default = "one")]
        sigma2: f64,
    },
    ComplexBernoulliGauss {
        rho: f64,
        #[serde(default = "one")]
        sigma2: f64,
    },
}

impl SignalPrior {
    pub fn real(rho: f64) -> Self {
        SignalPrior::RealBernoulliGauss { rho, sigma2: 1.0 }
    }

    pub fn complex(rho: f64) -> Self {
        SignalPrior::ComplexBernoulliGauss { rho, sigma2: 1.0 }
    }

    pub fn for_field(field: Field, rho: f64, sigma2: f64) -> Self {
        match field {
            Field::Real => SignalPrior::RealBernoulliGauss { rho, sigma2 },
            Field::Complex => SignalPrior::ComplexBernoulliGauss { rho, sigma2 },
        }
    }

    pub fn field(&self) -> Field {
        match self {
            SignalPrior::RealBernoulliGauss { .. } => Field::Real,
            SignalPrior::ComplexBernoulliGauss { .. } => Field::Complex,
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            SignalPrior::RealBernoulliGauss { rho, .. } | SignalPrior::ComplexBernoulliGauss { rho, .. } => rho,
        }
    }

    pub fn sigma2(&self) -> f64 {
        match *self {
            SignalPrior::RealBernoulliGauss { sigma2, .. } | SignalPrior::ComplexBernoulliGauss { sigma2, .. } => sigma2,
        }
    }

    /// Prior variance `ρσ²`.
    pub fn variance(&self) -> f64 {
        self.rho() * self.sigma2()
    }

    pub fn validate(&self) -> Result<()> {
        let (rho, s2) = (self.rho(), self.sigma2());
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {rho}")));
        }
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be positive, got {s2}")));
        }
        Ok(())
    }

    /// Posterior mean and variance of `x` given the pseudo-observation
    /// `X̂ = x + 𝒩(0, X̄)`. The field of `S` selects the real or circular
    /// complex density.
    pub fn denoise<S: Scalar>(&self, xhat: S, xbar: f64) -> (S, f64) {
        let rho = self.rho();
        let s2 = self.sigma2();
        let xbar = floor_variance(xbar);
        let total = xbar + s2;
        let shrink = s2 / total;
        let m = xhat.scale(shrink);
        let v = xbar * shrink;
        if rho >= 1.0 {
            return (m, v);
        }
        let ln_on = rho.ln() + ln_gauss_pdf_unchecked(xhat, S::zero(), total);
        let ln_off = (-rho).ln_1p() + ln_gauss_pdf_unchecked(xhat, S::zero(), xbar);
        let pi = logistic(ln_on - ln_off);
        (m.scale(pi), pi * v + pi * (1.0 - pi) * m.abs2())
    }

    /// Draws one signal entry.
    pub fn sample<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        if rng.random::<f64>() < self.rho() {
            S::sample_standard(rng).scale(self.sigma2().sqrt())
        } else {
            S::zero()
        }
    }
}

/// Prior on the per-sensor distortion `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GainPrior {
    /// Uniform on `[1 − w_d/2, 1 + w_d/2]`. The solver widens the support by
    /// `inflation`; data generation never does.
    UniformReal {
        w_d: f64,
        #[serde(default = "default_inflation")]
        inflation: f64,
    },
    /// `𝒞𝒩(0, complex_gain_variance)`.
    ComplexNormal {
        #[serde(default = "default_complex_gain_variance")]
        complex_gain_variance: f64,
    },
    /// `δ(d − d_cal)`.
    PointMass { d_cal: f64 },
}

/// Why a gain estimate did not come from the regular update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GainFlag {
    #[default]
    Regular,
    /// The likelihood carried no usable information; prior moments returned.
    ZeroEvidence,
    /// `R = 0` so no phase can be assigned.
    DegeneratePhase,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainEstimate<S> {
    pub mean: S,
    pub var: f64,
    pub flag: GainFlag,
}

impl GainPrior {
    pub fn uniform(w_d: f64) -> Self {
        GainPrior::UniformReal { w_d, inflation: DEFAULT_INFLATION }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GainPrior::UniformReal { w_d, inflation } => {
                if !(w_d >= 0.0 && w_d < 2.0) {
                    return Err(Error::Config(format!("w_d must lie in [0, 2), got {w_d}")));
                }
                if !(inflation >= 1.0) || w_d * inflation >= 2.0 {
                    return Err(Error::Config(format!(
                        "inflated support must stay positive (w_d = {w_d}, inflation = {inflation})"
                    )));
                }
            }
            GainPrior::ComplexNormal { complex_gain_variance } => {
                if !(complex_gain_variance > 0.0 && complex_gain_variance.is_finite()) {
                    return Err(Error::Config(format!(
                        "complex_gain_variance must be positive, got {complex_gain_variance}"
                    )));
                }
            }
            GainPrior::PointMass { d_cal } => {
                if !d_cal.is_finite() || d_cal == 0.0 {
                    return Err(Error::Config(format!("d_cal must be finite and nonzero, got {d_cal}")));
                }
            }
        }
        Ok(())
    }

    /// Support the solver assumes, inflation included.
    pub fn solver_support(&self) -> Option<(f64, f64)> {
        match *self {
            GainPrior::UniformReal { w_d, inflation } => {
                let h = 0.5 * w_d * inflation;
                Some((1.0 - h, 1.0 + h))
            }
            _ => None,
        }
    }

    /// Mean and variance of the solver-side prior.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            GainPrior::UniformReal { w_d, inflation } => {
                let w = w_d * inflation;
                (1.0, w * w / 12.0)
            }
            GainPrior::ComplexNormal { complex_gain_variance } => (0.0, complex_gain_variance),
            GainPrior::PointMass { d_cal } => (d_cal, 0.0),
        }
    }

    /// Draws `d` from the uninflated prior, retrying on an exact zero.
    pub fn sample<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        loop {
            let d = match *self {
                GainPrior::UniformReal { w_d, .. } => {
                    if w_d == 0.0 {
                        S::one()
                    } else {
                        let u = Uniform::new_inclusive(1.0 - 0.5 * w_d, 1.0 + 0.5 * w_d).expect("validated width");
                        S::from_re(u.sample(rng))
                    }
                }
                GainPrior::ComplexNormal { complex_gain_variance } => {
                    S::sample_standard(rng).scale(complex_gain_variance.sqrt())
                }
                GainPrior::PointMass { d_cal } => S::from_re(d_cal),
            };
            if d.abs2() > 0.0 {
                return d;
            }
        }
    }

    fn fallback<S: Scalar>(&self, flag: GainFlag) -> GainEstimate<S> {
        let (m, v) = self.moments();
        GainEstimate { mean: S::from_re(m), var: v, flag }
    }

    /// Posterior moments of `d` under the weight `|d|ᴾ p_D(d) 𝒩(d; R, Σ)` on
    /// the reals.
    pub fn update_real(&self, r: f64, sigma: f64, p: u32) -> Result<GainEstimate<f64>> {
        match *self {
            GainPrior::PointMass { d_cal } => Ok(GainEstimate { mean: d_cal, var: 0.0, flag: GainFlag::Regular }),
            GainPrior::UniformReal { .. } => self.truncated_radial(r, sigma, p).map(|e| GainEstimate {
                mean: e.0,
                var: e.1,
                flag: e.2,
            }),
            GainPrior::ComplexNormal { .. } => {
                let e = self.update_complex(Complex64::new(r, 0.0), sigma, p)?;
                Ok(GainEstimate { mean: e.mean.re, var: e.var, flag: e.flag })
            }
        }
    }

    /// Complex-field update. For the complex-normal prior this is the radial
    /// rule `d̂ = (R/|R|)·I(P+1,|R|,Σ,0,∞)/I(P,|R|,Σ,0,∞)`, `d̄ = Σ`; a uniform
    /// prior keeps `d` on its real support.
    pub fn update_complex(&self, r: Complex64, sigma: f64, p: u32) -> Result<GainEstimate<Complex64>> {
        match *self {
            GainPrior::PointMass { d_cal } => {
                Ok(GainEstimate { mean: Complex64::new(d_cal, 0.0), var: 0.0, flag: GainFlag::Regular })
            }
            GainPrior::UniformReal { .. } => {
                let (m, v, flag) = self.truncated_radial(r.re, sigma, p)?;
                Ok(GainEstimate { mean: Complex64::new(m, 0.0), var: v, flag })
            }
            GainPrior::ComplexNormal { .. } => {
                if !sigma.is_finite() || !r.is_finite() {
                    return Ok(self.fallback(GainFlag::ZeroEvidence));
                }
                let sigma = floor_variance(sigma);
                let modulus = r.norm();
                if modulus == 0.0 {
                    return Ok(GainEstimate { mean: Complex64::new(0.0, 0.0), var: sigma, flag: GainFlag::DegeneratePhase });
                }
                let m = power_weight_moments(p, modulus, sigma, 0.0, f64::INFINITY)?;
                Ok(GainEstimate { mean: r * (m.mean / modulus), var: sigma, flag: GainFlag::Regular })
            }
        }
    }

    pub fn update<S: Scalar>(&self, r: S, sigma: f64, p: u32) -> Result<GainEstimate<S>> {
        match S::FIELD {
            Field::Real => {
                let e = self.update_real(r.re(), sigma, p)?;
                Ok(GainEstimate { mean: S::from_re(e.mean), var: e.var, flag: e.flag })
            }
            Field::Complex => {
                let e = self.update_complex(Complex64::new(r.re(), r.im()), sigma, p)?;
                Ok(GainEstimate { mean: S::from_parts(e.mean.re, e.mean.im), var: e.var, flag: e.flag })
            }
        }
    }

    fn truncated_radial(&self, r: f64, sigma: f64, p: u32) -> Result<(f64, f64, GainFlag)> {
        let (a, b) = self.solver_support().expect("uniform prior");
        if !(b > a) {
            return Ok((a, 0.0, GainFlag::Regular));
        }
        if !sigma.is_finite() || !r.is_finite() {
            let (m, v) = self.moments();
            return Ok((m, v, GainFlag::ZeroEvidence));
        }
        let m = power_weight_moments(p, r, floor_variance(sigma), a, b)?;
        if !m.mean.is_finite() || !m.variance.is_finite() {
            let (m, v) = self.moments();
            return Ok((m, v, GainFlag::ZeroEvidence));
        }
        Ok((m.mean, m.variance, GainFlag::Regular))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::moments::{f_moments, BernoulliGaussWeight, PowerWeight};
    use crate::kernels::quadrature::integrate_adaptive;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pure_gaussian_prior() {
        let p = SignalPrior::real(1.0);
        let (m, v) = p.denoise(0.9f64, 0.3);
        assert_relative_eq!(m, 0.9 / 1.3, max_relative = 1e-15);
        assert_relative_eq!(v, 0.3 / 1.3, max_relative = 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_mean() {
        let (m, _) = SignalPrior::real(0.3).denoise(0.0f64, 0.2);
        assert_eq!(m, 0.0);
        let (m, _) = SignalPrior::complex(0.3).denoise(Complex64::new(0.0, 0.0), 0.2);
        assert_eq!(m, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn bernoulli_gauss_matches_quadrature() {
        let cases = [(0.2, 0.8, 0.1, 1.0), (0.5, 1.0, 0.25, 1.0), (0.1, -2.0, 0.5, 2.5), (0.7, 0.05, 1e-3, 0.4)];
        for &(rho, xh, xb, s2) in &cases {
            let prior = SignalPrior::RealBernoulliGauss { rho, sigma2: s2 };
            let (m, v) = prior.denoise(xh, xb);
            let (qm, qv) = f_moments(&BernoulliGaussWeight { rho, sigma2: s2 }, xh, xb).unwrap().posterior().unwrap();
            assert_relative_eq!(m, qm, max_relative = 1e-10);
            assert_relative_eq!(v, qv, max_relative = 1e-9);
        }
    }

    #[test]
    fn complex_bernoulli_gauss_matches_2d_quadrature() {
        let (rho, xb) = (0.3, 0.4);
        let xh = Complex64::new(0.6, -0.9);
        let prior = SignalPrior::complex(rho);
        let (m, v) = prior.denoise(xh, xb);
        // Continuous part by 2-D quadrature, atom at 0 added exactly.
        let mut f = [0.0f64; 4];
        for (k, fk) in f.iter_mut().enumerate() {
            let inner = |a: f64| {
                integrate_adaptive(
                    |b: f64| {
                        let x = Complex64::new(a, b);
                        let w = rho
                            * ln_gauss_pdf_unchecked(x, Complex64::new(0.0, 0.0), 1.0).exp()
                            * ln_gauss_pdf_unchecked(x, xh, xb).exp();
                        w * [1.0, a, b, a * a + b * b][k]
                    },
                    -9.0,
                    9.0,
                    24,
                    1e-13,
                    0.0,
                )
                .value
            };
            *fk = integrate_adaptive(inner, -9.0, 9.0, 24, 1e-12, 0.0).value;
        }
        let atom = (1.0 - rho) * ln_gauss_pdf_unchecked(Complex64::new(0.0, 0.0), xh, xb).exp();
        let f0 = f[0] + atom;
        let mean = Complex64::new(f[1] / f0, f[2] / f0);
        assert_relative_eq!(m.re, mean.re, max_relative = 1e-9);
        assert_relative_eq!(m.im, mean.im, max_relative = 1e-9);
        assert_relative_eq!(v, f[3] / f0 - mean.norm_sqr(), max_relative = 1e-8);
    }

    #[test]
    fn uniform_gain_matches_quadrature() {
        let prior = GainPrior::UniformReal { w_d: 1.0, inflation: 1.0 };
        let e = prior.update_real(1.0, 0.04, 2).unwrap();
        let (qm, qv) = f_moments(&PowerWeight { p: 2, a: 0.5, b: 1.5 }, 1.0, 0.04).unwrap().posterior().unwrap();
        assert_relative_eq!(e.mean, qm, max_relative = 1e-10);
        assert_relative_eq!(e.var, qv, max_relative = 1e-8);
    }

    #[test]
    fn uniform_gain_far_above_support() {
        let prior = GainPrior::UniformReal { w_d: 1.0, inflation: 1.1 };
        let e = prior.update_real(10.0, 0.01, 4).unwrap();
        assert!(e.mean > 1.54 && e.mean <= 1.55, "{e:?}");
        assert!(e.var < 1e-5);
    }

    #[test]
    fn degenerate_width_collapses() {
        let prior = GainPrior::UniformReal { w_d: 0.0, inflation: 1.1 };
        let e = prior.update_real(0.3, 0.2, 3).unwrap();
        assert_eq!((e.mean, e.var), (1.0, 0.0));
        let e = GainPrior::UniformReal { w_d: 1e-9, inflation: 1.1 }.update_real(0.3, 0.2, 3).unwrap();
        assert!((e.mean - 1.0).abs() < 1e-9 && e.var < 1e-18, "{e:?}");
    }

    #[test]
    fn infinite_variance_is_zero_evidence() {
        let prior = GainPrior::uniform(1.0);
        let e = prior.update_real(0.0, f64::INFINITY, 3).unwrap();
        assert_eq!(e.flag, GainFlag::ZeroEvidence);
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn complex_gain_radial_rule() {
        let prior = GainPrior::ComplexNormal { complex_gain_variance: 10.0 };
        let e = prior.update_complex(Complex64::new(2.0, 0.0), 0.5, 3).unwrap();
        assert_eq!(e.mean.im, 0.0);
        assert!(e.mean.re > 0.0);
        assert_eq!(e.var, 0.5);
        let q = |k: i32| {
            integrate_adaptive(|t: f64| t.powi(k) * (-(t - 2.0) * (t - 2.0) / 1.0).exp(), 0.0, 12.0, 64, 1e-15, 0.0).value
        };
        assert_relative_eq!(e.mean.re, q(4) / q(3), max_relative = 1e-10);
        let r = Complex64::from_polar(2.0, 0.7);
        let e2 = prior.update_complex(r, 0.5, 3).unwrap();
        assert_relative_eq!(e2.mean.arg(), 0.7, max_relative = 1e-13);
        assert_relative_eq!(e2.mean.norm(), e.mean.re, max_relative = 1e-13);
    }

    #[test]
    fn complex_gain_at_origin_is_flagged() {
        let prior = GainPrior::ComplexNormal { complex_gain_variance: 10.0 };
        let e = prior.update_complex(Complex64::new(0.0, 0.0), 0.5, 3).unwrap();
        assert_eq!(e.flag, GainFlag::DegeneratePhase);
        assert_eq!(e.mean, Complex64::new(0.0, 0.0));
        assert_eq!(e.var, 0.5);
    }

    #[test]
    fn validation() {
        assert!(SignalPrior::real(0.0).validate().is_err());
        assert!(SignalPrior::real(1.0).validate().is_ok());
        assert!(GainPrior::uniform(1.9).validate().is_err());
        assert!(GainPrior::uniform(1.0).validate().is_ok());
        assert!(GainPrior::PointMass { d_cal: 0.0 }.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let p: SignalPrior = serde_json::from_str(r#"{"variant":"real-bernoulli-gauss","rho":0.2}"#).unwrap();
        assert_eq!(p, SignalPrior::real(0.2));
        let g: GainPrior = serde_json::from_str(r#"{"variant":"uniform-real","w_d":1.0}"#).unwrap();
        assert_eq!(g, GainPrior::uniform(1.0));
        assert!(serde_json::from_str::<GainPrior>(r#"{"variant":"uniform-real","w_d":1.0,"bogus":1}"#).is_err());
    }

    fn complex_wirtinger(prior: &SignalPrior, xh: Complex64, xb: f64) -> Complex64 {
        let h = 1e-5;
        let d_re = (prior.denoise(xh + h, xb).0 - prior.denoise(xh - h, xb).0) / (2.0 * h);
        let i = Complex64::new(0.0, h);
        let d_im = (prior.denoise(xh + i, xb).0 - prior.denoise(xh - i, xb).0) / (2.0 * h);
        0.5 * (d_re - Complex64::new(0.0, 1.0) * d_im)
    }

    proptest! {
        #[test]
        fn variance_bounds_and_oddness(rho in 0.01f64..1.0, xh in -4.0f64..4.0, xb in 1e-4f64..3.0, s2 in 0.1f64..3.0) {
            let prior = SignalPrior::RealBernoulliGauss { rho, sigma2: s2 };
            let (m, v) = prior.denoise(xh, xb);
            // Mixture of two Gaussians: within-component variance plus at
            // most a quarter of the squared gap between component means.
            let gap = xh * s2 / (xb + s2);
            prop_assert!(v >= 0.0 && v <= xb * s2 / (xb + s2) + 0.25 * gap * gap + 1e-12);
            let (m2, v2) = prior.denoise(-xh, xb);
            prop_assert_eq!(m2, -m);
            prop_assert_eq!(v2, v);
        }

        #[test]
        fn real_derivative_identity(rho in 0.05f64..1.0, xh in -3.0f64..3.0, xb in 0.05f64..2.0) {
            let prior = SignalPrior::real(rho);
            let h = 1e-5;
            let slope = (prior.denoise(xh + h, xb).0 - prior.denoise(xh - h, xb).0) / (2.0 * h);
            let (_, v) = prior.denoise(xh, xb);
            prop_assert!((xb * slope - v).abs() < 1e-5);
        }

        #[test]
        fn complex_derivative_identity(rho in 0.05f64..1.0, a in -2.0f64..2.0, b in -2.0f64..2.0, xb in 0.05f64..2.0) {
            let prior = SignalPrior::complex(rho);
            let xh = Complex64::new(a, b);
            let w = complex_wirtinger(&prior, xh, xb);
            let (_, v) = prior.denoise(xh, xb);
            prop_assert!((w * xb - v).norm() < 1e-5, "{w} {v}");
        }

        #[test]
        fn point_mass_ignores_data(r in -5.0f64..5.0, s in 1e-6f64..10.0, p in 1u32..8) {
            let e = GainPrior::PointMass { d_cal: 1.3 }.update_real(r, s, p).unwrap();
            prop_assert_eq!((e.mean, e.var), (1.3, 0.0));
        }

        #[test]
        fn uniform_gain_oracle(r in 0.0f64..2.0, s in 1e-3f64..1.0, p in 1u32..8) {
            let prior = GainPrior::UniformReal { w_d: 1.0, inflation: 1.1 };
            let e = prior.update_real(r, s, p).unwrap();
            let (qm, qv) = f_moments(&PowerWeight { p, a: 0.45, b: 1.55 }, r, s).unwrap().posterior().unwrap();
            prop_assert!((e.mean - qm).abs() <= 1e-8 * qm.abs());
            prop_assert!((e.var - qv).abs() <= 1e-6 * qv.abs() + 1e-14);
            prop_assert!(e.mean >= 0.45 && e.mean <= 1.55);
        }
    }
}
