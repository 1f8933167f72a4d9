//! Gaussian-moment convolutions `fₖ = ∫ xᵏ g(x) 𝒩(x;R,Σ) dx` by quadrature.
//!
//! These are the reference implementations that the closed forms in the
//! prior and channel modules are tested against.

use super::gauss::{ln_gauss_pdf_unchecked, std_normal_cdf};
use super::quadrature::integrate_adaptive;
use crate::error::{domain, Result};

/// A nonnegative weight on the real line: an absolutely continuous part
/// plus a finite set of atoms.
pub trait Weight {
    fn density(&self, x: f64) -> f64;

    /// Closed interval outside which `density` vanishes.
    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `(location, mass)` pairs.
    fn atoms(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }
}

/// `g ≡ 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Flat;

impl Weight for Flat {
    fn density(&self, _x: f64) -> f64 {
        1.0
    }
}

/// `g(x) = 𝒩(x; mean, var)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianWeight {
    pub mean: f64,
    pub var: f64,
}

impl Weight for GaussianWeight {
    fn density(&self, x: f64) -> f64 {
        ln_gauss_pdf_unchecked(x, self.mean, self.var).exp()
    }
}

/// `g(x) = (1−ρ)δ(x) + ρ𝒩(x;0,σ²)`.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliGaussWeight {
    pub rho: f64,
    pub sigma2: f64,
}

impl Weight for BernoulliGaussWeight {
    fn density(&self, x: f64) -> f64 {
        self.rho * ln_gauss_pdf_unchecked(x, 0.0, self.sigma2).exp()
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        if self.rho < 1.0 {
            vec![(0.0, 1.0 - self.rho)]
        } else {
            Vec::new()
        }
    }
}

/// `g(t) = tᵖ` on `[a,b]` with `a ≥ 0`, zero elsewhere.
#[derive(Clone, Copy, Debug)]
pub struct PowerWeight {
    pub p: u32,
    pub a: f64,
    pub b: f64,
}

impl Weight for PowerWeight {
    fn density(&self, t: f64) -> f64 {
        if t < self.a || t > self.b {
            0.0
        } else {
            t.powi(self.p as i32)
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }
}

/// Adapter for closures.
pub struct FnWeight<F: Fn(f64) -> f64> {
    pub f: F,
    pub support: (f64, f64),
}

impl<F: Fn(f64) -> f64> Weight for FnWeight<F> {
    fn density(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn support(&self) -> (f64, f64) {
        self.support
    }
}

/// `(f₀, f₁, f₂)` for a given weight and Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussMoments {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
}

impl GaussMoments {
    /// `true` when `f₀` underflowed and no posterior can be formed.
    pub fn zero_evidence(&self) -> bool {
        !(self.f0 > 0.0) || !self.f0.is_finite()
    }

    /// `(f̂, f̄)`, or `None` on zero evidence.
    pub fn posterior(&self) -> Option<(f64, f64)> {
        if self.zero_evidence() {
            return None;
        }
        let mean = self.f1 / self.f0;
        Some((mean, (self.f2 / self.f0 - mean * mean).max(0.0)))
    }
}

/// Half-width of the integration window in units of `√Σ`.
pub const WINDOW_SIGMAS: f64 = 10.0;

/// Quadrature evaluation of `fₖ`. The continuous part is integrated over
/// `[R−10√Σ, R+10√Σ]` intersected with the weight's support; atoms are
/// added exactly.
pub fn f_moments<W: Weight + ?Sized>(g: &W, r: f64, sigma: f64) -> Result<GaussMoments> {
    if !(sigma > 0.0) {
        return domain(format!("variance must be positive, got {sigma}"));
    }
    let sd = sigma.sqrt();
    let (lo_s, hi_s) = g.support();
    let lo = (r - WINDOW_SIGMAS * sd).max(lo_s);
    let hi = (r + WINDOW_SIGMAS * sd).min(hi_s);
    let mut m = GaussMoments { f0: 0.0, f1: 0.0, f2: 0.0 };
    if hi > lo {
        let kernel = |x: f64| g.density(x) * ln_gauss_pdf_unchecked(x, r, sigma).exp();
        // Integrate around R so large |R| does not cost digits in f₂.
        let c0 = integrate_adaptive(kernel, lo, hi, 32, 1e-14, 0.0).value;
        let c1 = integrate_adaptive(|x| (x - r) * kernel(x), lo, hi, 32, 1e-14, 0.0).value;
        let c2 = integrate_adaptive(|x| (x - r) * (x - r) * kernel(x), lo, hi, 32, 1e-14, 0.0).value;
        m.f0 = c0;
        m.f1 = c1 + r * c0;
        m.f2 = c2 + 2.0 * r * c1 + r * r * c0;
    }
    for (x, mass) in g.atoms() {
        let w = mass * ln_gauss_pdf_unchecked(x, r, sigma).exp();
        m.f0 += w;
        m.f1 += w * x;
        m.f2 += w * x * x;
    }
    Ok(m)
}

/// `|Σ·∂f̂/∂R − f̄|` with a centred difference for `∂f̂/∂R`.
pub fn check_f_derivative<W: Weight + ?Sized>(g: &W, r: f64, sigma: f64) -> Result<f64> {
    let h = 1e-4 * sigma.sqrt().max(1e-3);
    let mean_at = |rr: f64| -> Result<f64> {
        f_moments(g, rr, sigma)?
            .posterior()
            .map(|p| p.0)
            .ok_or_else(|| crate::error::Error::Domain("zero evidence".into()))
    };
    let slope = (mean_at(r + h)? - mean_at(r - h)?) / (2.0 * h);
    let (_, var) = f_moments(g, r, sigma)?
        .posterior()
        .ok_or_else(|| crate::error::Error::Domain("zero evidence".into()))?;
    Ok((sigma * slope - var).abs())
}

/// Gaussian mass of `[a,b]` under `𝒩(R,Σ)`.
pub fn interval_mass(r: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let sd = sigma.sqrt();
    std_normal_cdf((b - r) / sd) - std_normal_cdf((a - r) / sd)
}
