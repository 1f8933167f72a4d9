//! Power-weighted truncated Gaussian integrals.
//!
//! `I(n,R,Σ,a,b) = ∫ₐᵇ tⁿ exp(−(t−R)²/(2Σ)) dt`, evaluated through the
//! binomial expansion of `tⁿ = (R + (t−R))ⁿ` into incomplete-gamma terms.
//! Each term is carried as a log-magnitude and a sign so that large `n`
//! or tiny `Σ` neither overflow nor underflow; only ratios of `I` values
//! are consumed downstream.

use super::gamma::{ln_binomial, ln_gamma, ln_regularized_pq};
use super::quadrature::integrate_adaptive;
use crate::error::{domain, Result};

/// A real number stored as `sign · exp(ln_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSigned {
    pub ln_abs: f64,
    pub sign: f64,
}

impl LogSigned {
    pub const ZERO: LogSigned = LogSigned { ln_abs: f64::NEG_INFINITY, sign: 0.0 };

    pub fn value(self) -> f64 {
        self.sign * self.ln_abs.exp()
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0.0
    }

    /// `self / other`.
    pub fn ratio(self, other: LogSigned) -> f64 {
        self.sign * other.sign * (self.ln_abs - other.ln_abs).exp()
    }

    /// Signed sum with a condition estimate `Σ|xᵢ| / |Σxᵢ|`.
    pub fn sum(terms: &[LogSigned]) -> (LogSigned, f64) {
        let max = terms
            .iter()
            .filter(|t| !t.is_zero())
            .map(|t| t.ln_abs)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return (LogSigned::ZERO, 1.0);
        }
        let mut signed = 0.0;
        let mut absolute = 0.0;
        for t in terms.iter().filter(|t| !t.is_zero()) {
            let v = (t.ln_abs - max).exp();
            signed += t.sign * v;
            absolute += v;
        }
        if signed == 0.0 {
            return (LogSigned::ZERO, f64::INFINITY);
        }
        (
            LogSigned { ln_abs: max + signed.abs().ln(), sign: signed.signum() },
            absolute / signed.abs(),
        )
    }
}

/// Result of [`weighted_gaussian_integral`].
#[derive(Clone, Copy, Debug)]
pub struct WeightedIntegral {
    pub value: LogSigned,
    /// `Σ|termᵢ|·cᵢ / |I|`, where `cᵢ` is the cancellation inside term `i`;
    /// the relative error of `value` is roughly this times machine epsilon.
    pub condition: f64,
}

/// `ln |P(s,x_hi) − P(s,x_lo)|` for `x_hi ≥ x_lo`, picking whichever of the
/// lower or upper regularized functions keeps the subtraction benign. The
/// second value is the log of the cancellation factor `larger / difference`.
fn ln_p_difference(s: f64, x_lo: f64, x_hi: f64) -> (f64, f64) {
    if x_hi == x_lo {
        return (f64::NEG_INFINITY, 0.0);
    }
    let (lnp_lo, lnq_lo) = ln_regularized_pq(s, x_lo);
    let (lnp_hi, lnq_hi) = ln_regularized_pq(s, x_hi);
    let (big, diff) = if lnq_lo < -std::f64::consts::LN_2 {
        // Both points past the median: Q(lo) − Q(hi).
        (lnq_lo, lnq_lo + (-(lnq_hi - lnq_lo).exp_m1()).ln())
    } else {
        (lnp_hi, lnp_hi + (-(lnp_lo - lnp_hi).exp_m1()).ln())
    };
    (diff, (big - diff).max(0.0))
}

/// Log-signed value of `∫_{a−R}^{b−R} uⁱ exp(−u²/(2Σ)) du` expressed through
/// regularized incomplete gammas with shape `(i+1)/2`, with the log of its
/// own cancellation factor.
fn centered_term(i: u32, lo: f64, hi: f64, sigma: f64) -> (LogSigned, f64) {
    let s = 0.5 * (i as f64 + 1.0);
    let x_lo = lo * lo / (2.0 * sigma);
    let x_hi = hi * hi / (2.0 * sigma);
    let scale = -std::f64::consts::LN_2 + s * (2.0 * sigma).ln() + ln_gamma(s);
    let even = i % 2 == 0;
    let (ln_abs, ln_cancel, sign) = if even && lo < 0.0 && hi > 0.0 {
        // Interval straddles the centre: both halves add.
        let (lp_lo, _) = ln_regularized_pq(s, x_lo);
        let (lp_hi, _) = ln_regularized_pq(s, x_hi);
        let m = lp_lo.max(lp_hi);
        (m + ((lp_lo - m).exp() + (lp_hi - m).exp()).ln(), 0.0, 1.0)
    } else {
        let x_min = x_lo.min(x_hi);
        let (d, c) = ln_p_difference(s, x_min, x_lo.max(x_hi));
        // Odd powers: the antiderivative is even in u.
        let sign = if even || x_hi > x_lo { 1.0 } else { -1.0 };
        // A log-magnitude near −x carries an absolute error of about x·ε.
        let exponent_loss = if lo * hi > 0.0 { x_min.ln_1p() } else { 0.0 };
        (d, c + exponent_loss, sign)
    };
    if ln_abs == f64::NEG_INFINITY || ln_abs.is_nan() {
        (LogSigned::ZERO, 0.0)
    } else {
        (LogSigned { ln_abs: ln_abs + scale, sign }, ln_cancel)
    }
}

/// `I(n,R,Σ,a,b)` in log-signed form.
pub fn weighted_gaussian_integral(n: u32, r: f64, sigma: f64, a: f64, b: f64) -> Result<WeightedIntegral> {
    if !(sigma > 0.0) {
        return domain(format!("variance must be positive, got {sigma}"));
    }
    if !(a < b) {
        return domain(format!("need a < b, got [{a}, {b}]"));
    }
    let lo = a - r;
    let hi = b - r;
    let ln_r = r.abs().ln();
    let r_sign = r.signum();
    let mut terms = Vec::with_capacity(n as usize + 1);
    let mut weighted = Vec::with_capacity(n as usize + 1);
    for i in 0..=n {
        let k = n - i;
        if k > 0 && r == 0.0 {
            continue;
        }
        let (centred, ln_cancel) = centered_term(i, lo, hi, sigma);
        if centred.is_zero() {
            continue;
        }
        let mut ln_abs = ln_binomial(n as u64, i as u64) + centred.ln_abs;
        let mut sign = centred.sign;
        if k > 0 {
            ln_abs += k as f64 * ln_r;
            if k % 2 == 1 {
                sign *= r_sign;
            }
        }
        terms.push(LogSigned { ln_abs, sign });
        weighted.push(LogSigned { ln_abs: ln_abs + ln_cancel, sign: 1.0 });
    }
    let (value, _) = LogSigned::sum(&terms);
    let (spread, _) = LogSigned::sum(&weighted);
    let condition = if value.is_zero() { f64::INFINITY } else { (spread.ln_abs - value.ln_abs).exp().max(1.0) };
    Ok(WeightedIntegral { value, condition })
}

/// `I(n,R,Σ,a,b)` as a plain float; overflows to `inf` for large arguments.
pub fn i_weighted_gaussian(n: u32, r: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    Ok(weighted_gaussian_integral(n, r, sigma, a, b)?.value.value())
}

/// Mean and variance of `t` under the density `∝ tᵖ 𝒩(t;R,Σ)` on `[a,b]`,
/// `0 ≤ a < b ≤ ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerMoments {
    pub mean: f64,
    pub variance: f64,
    /// `true` when the expansion was too ill-conditioned and the moments came
    /// from direct quadrature of the log-concave density instead.
    pub used_quadrature: bool,
}

/// Conditioning above which the incomplete-gamma expansion is abandoned.
pub const CONDITION_LIMIT: f64 = 1e3;

pub fn power_weight_moments(p: u32, r: f64, sigma: f64, a: f64, b: f64) -> Result<PowerMoments> {
    if !(a >= 0.0) {
        return domain(format!("power weight needs a nonnegative support, got a = {a}"));
    }
    if !(sigma > 0.0) {
        return domain(format!("variance must be positive, got {sigma}"));
    }
    if !(a < b) {
        return domain(format!("need a < b, got [{a}, {b}]"));
    }
    if let Some(m) = moments_by_expansion(p, r, sigma, a, b)? {
        return Ok(m);
    }
    Ok(moments_by_quadrature(p, r, sigma, a, b))
}

fn moments_by_expansion(p: u32, r: f64, sigma: f64, a: f64, b: f64) -> Result<Option<PowerMoments>> {
    let ip = weighted_gaussian_integral(p, r, sigma, a, b)?;
    let ip1 = weighted_gaussian_integral(p + 1, r, sigma, a, b)?;
    let mut worst = ip.condition.max(ip1.condition);
    let ratio_prev = if p > 0 {
        let im1 = weighted_gaussian_integral(p - 1, r, sigma, a, b)?;
        worst = worst.max(im1.condition);
        Some(ip.value.ratio(im1.value))
    } else {
        None
    };
    if !(worst <= CONDITION_LIMIT) || ip.value.sign <= 0.0 || ip1.value.sign <= 0.0 {
        return Ok(None);
    }
    let mean = ip1.value.ratio(ip.value);
    // Var = Σ·[(p+1) − p·m/m' + ((m−b)·bᵖe_b − (m−a)·aᵖe_a)/I(p)], from
    // integrating tᵏ(t−R)exp(−(t−R)²/(2Σ)) by parts. The overall Σ factor
    // avoids the E[t²] − E[t]² cancellation when Σ is tiny.
    let mut bracket = (p + 1) as f64;
    if let Some(m_prev) = ratio_prev {
        bracket -= p as f64 * mean / m_prev;
    }
    let boundary = |edge: f64| -> f64 {
        if !edge.is_finite() || (edge == 0.0 && p > 0) {
            return 0.0;
        }
        let ln_pow = if p == 0 { 0.0 } else { p as f64 * edge.ln() };
        (ln_pow - (edge - r).powi(2) / (2.0 * sigma) - ip.value.ln_abs).exp()
    };
    bracket += (mean - b) * boundary(b) - (mean - a) * boundary(a);
    let variance = (sigma * bracket).max(0.0);
    Ok(Some(PowerMoments { mean: mean.clamp(a, b), variance, used_quadrature: false }))
}

fn moments_by_quadrature(p: u32, r: f64, sigma: f64, a: f64, b: f64) -> PowerMoments {
    let pf = p as f64;
    let disc = (r * r + 4.0 * pf * sigma).sqrt();
    let interior_mode = if p == 0 {
        r
    } else if r >= 0.0 {
        0.5 * (r + disc)
    } else {
        2.0 * pf * sigma / (disc - r)
    };
    let mode = interior_mode.clamp(a, b);
    let slope = if p == 0 { 0.0 } else { pf / mode } - (mode - r) / sigma;
    let width = if mode == interior_mode { 40.0 * sigma.sqrt() } else { (60.0 / slope.abs()).min(40.0 * sigma.sqrt()) };
    let lo = (mode - width).max(a);
    let hi = (mode + width).min(b);
    if !(hi > lo) {
        return PowerMoments { mean: mode, variance: 0.0, used_quadrature: true };
    }
    let curvature = if p == 0 { 0.0 } else { pf / (mode * mode) } + 1.0 / sigma;
    let panels = ((hi - lo) * curvature.sqrt()).ceil().clamp(16.0, 2000.0) as usize;
    // Work in u = t − mode so steep densities are evaluated without
    // rounding in t, and log w(t) − log w(mode) without large cancellations.
    let shift = mode - r;
    let density = |u: f64| {
        let lp = if p == 0 { 0.0 } else { pf * (u / mode).ln_1p() };
        (lp - u * (u + 2.0 * shift) / (2.0 * sigma)).exp()
    };
    let (ulo, uhi) = (lo - mode, hi - mode);
    let m0 = integrate_adaptive(density, ulo, uhi, panels, 1e-14, 0.0).value;
    let m1 = integrate_adaptive(|u| u * density(u), ulo, uhi, panels, 1e-14, 0.0).value;
    let offset = m1 / m0;
    let c2 = integrate_adaptive(|u| (u - offset) * (u - offset) * density(u), ulo, uhi, panels, 1e-14, 0.0).value;
    let mean = mode + offset;
    PowerMoments { mean: mean.clamp(a, b), variance: (c2 / m0).max(0.0), used_quadrature: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::gauss::std_normal_cdf;
    use crate::kernels::quadrature::integrate_adaptive;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent oracle: direct quadrature of tⁿ·exp(−(t−R)²/(2Σ)) on the
    /// window where the Gaussian factor lives.
    fn oracle(n: i32, r: f64, sigma: f64, a: f64, b: f64) -> f64 {
        let sd = sigma.sqrt();
        let (lo, hi) = if a.is_finite() && b.is_finite() {
            (a, b)
        } else {
            (a.max(r - 12.0 * sd), b.min(r + 12.0 * sd))
        };
        integrate_adaptive(
            |t: f64| t.powi(n) * (-(t - r) * (t - r) / (2.0 * sigma)).exp(),
            lo,
            hi,
            64,
            1e-15,
            0.0,
        )
        .value
    }

    #[test]
    fn untruncated_mean_ratio() {
        for &(r, s) in &[(0.7, 0.3), (-1.5, 2.0), (3.0, 0.01)] {
            let i0 = i_weighted_gaussian(0, r, s, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            let i1 = i_weighted_gaussian(1, r, s, f64::NEG_INFINITY, f64::INFINITY).unwrap();
            assert_relative_eq!(i1 / i0, r, max_relative = 1e-13);
        }
    }

    #[test]
    fn zeroth_order_is_gaussian_mass() {
        // Φ((b−R)/√Σ) − Φ((a−R)/√Σ) to 30 digits.
        let cases = [
            (1.0, 0.04, 0.45, 1.55, 0.994_040_473_529_890_890_0),
            (0.0, 1.0, -0.5, 2.0, 0.668_712_329_325_833_896_4),
            (2.0, 0.3, 2.5, 4.0, 0.180_524_849_446_661_747_5),
            (3.0, 0.5, -1.0, 1.0, 0.002_338_859_781_894_682_779),
        ];
        for &(r, s, a, b, mass) in &cases {
            let i0 = i_weighted_gaussian(0, r, s, a, b).unwrap();
            assert_relative_eq!(i0 / (2.0 * std::f64::consts::PI * s).sqrt(), mass, max_relative = 1e-13);
            let sd: f64 = f64::sqrt(s);
            let phi = std_normal_cdf((b - r) / sd) - std_normal_cdf((a - r) / sd);
            assert_relative_eq!(phi, mass, max_relative = 1e-12);
        }
    }

    #[test]
    fn nearly_untruncated_third_over_second() {
        let (r, s, a, b) = (1.0, 0.01, 0.5, 1.5);
        let got = i_weighted_gaussian(3, r, s, a, b).unwrap() / i_weighted_gaussian(2, r, s, a, b).unwrap();
        let want = oracle(3, r, s, a, b) / oracle(2, r, s, a, b);
        assert_relative_eq!(got, want, max_relative = 1e-8);
    }

    #[test]
    fn large_order_does_not_overflow() {
        let w = weighted_gaussian_integral(400, 1.2, 0.05, 0.45, 1.65).unwrap();
        assert!(w.value.ln_abs.is_finite());
        let m = power_weight_moments(400, 1.2, 0.05, 0.45, 1.65).unwrap();
        assert!(m.mean > 1.2 && m.mean <= 1.65, "{m:?}");
        let m0 = oracle(400, 1.2, 0.05, 0.45, 1.65);
        let m1 = oracle(401, 1.2, 0.05, 0.45, 1.65);
        assert_relative_eq!(m.mean, m1 / m0, max_relative = 1e-10);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(weighted_gaussian_integral(1, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(weighted_gaussian_integral(1, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn expansion_and_quadrature_paths_agree() {
        for &(p, r, s) in &[(2u32, 1.0, 0.04), (4, 0.8, 0.2), (3, 1.3, 1e-4), (1, 0.2, 0.5)] {
            let a = moments_by_expansion(p, r, s, 0.45, 1.55).unwrap().unwrap();
            let q = moments_by_quadrature(p, r, s, 0.45, 1.55);
            assert_relative_eq!(a.mean, q.mean, max_relative = 1e-11);
            assert_relative_eq!(a.variance, q.variance, max_relative = 1e-8);
        }
    }

    #[test]
    fn tiny_variance_keeps_relative_precision() {
        let m = power_weight_moments(4, 1.1, 1e-15, 0.45, 1.55).unwrap();
        assert!(!m.used_quadrature);
        // Interior Gaussian: variance ≈ Σ·(1 − O(Σ)), mean ≈ R + pΣ/R.
        assert_relative_eq!(m.variance, 1e-15, max_relative = 1e-9);
        assert_relative_eq!(m.mean, 1.1 + 4.0 * 1e-15 / 1.1, max_relative = 4e-15);
    }

    #[test]
    fn far_tail_falls_back_to_quadrature() {
        let m = power_weight_moments(4, 10.0, 0.01, 0.45, 1.55).unwrap();
        assert!(m.used_quadrature);
        // Reference moments from 40-digit quadrature.
        assert_relative_eq!(m.mean, 1.548_820_504_973_953_8, max_relative = 1e-13);
        assert_relative_eq!(m.variance, 1.390_815_227_896_050_2e-6, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn ratios_match_quadrature(n in 0u32..8, r in -1.0f64..3.0, s in 0.01f64..1.0,
                                   a in 0.0f64..1.0, w in 0.1f64..2.0) {
            let b = a + w;
            let wi = weighted_gaussian_integral(n + 1, r, s, a, b).unwrap();
            let wj = weighted_gaussian_integral(n, r, s, a, b).unwrap();
            prop_assume!(wi.condition < 1e4 && wj.condition < 1e4);
            let got = wi.value.ratio(wj.value);
            let want = oracle(n as i32 + 1, r, s, a, b) / oracle(n as i32, r, s, a, b);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1e-3), "{got} vs {want}");
        }

        #[test]
        fn invariant_to_normalization(n in 1u32..6, r in 0.0f64..2.0, s in 0.01f64..1.0, c in -20.0f64..20.0) {
            // Rescaling I by a positive constant (here e^c) must not move ratios.
            let i1 = weighted_gaussian_integral(n + 1, r, s, 0.3, 1.7).unwrap().value;
            let i0 = weighted_gaussian_integral(n, r, s, 0.3, 1.7).unwrap().value;
            let scaled1 = LogSigned { ln_abs: i1.ln_abs + c, ..i1 };
            let scaled0 = LogSigned { ln_abs: i0.ln_abs + c, ..i0 };
            let direct = i1.ratio(i0);
            prop_assert!((scaled1.ratio(scaled0) - direct).abs() <= 1e-13 * direct.abs());
        }
    }
}
