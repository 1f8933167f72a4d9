//! Gaussian densities on ℝ and ℂ.
//!
//! Real: `𝒩(x;R,Σ) = exp(−|x−R|²/(2Σ)) / √(2πΣ)`.
//! Complex (circularly symmetric, `E|x−R|² = Σ`): `exp(−|x−R|²/Σ) / (πΣ)`.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::scalar::{Field, Scalar};

/// Lower bound applied to every variance before it is used as a divisor.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[inline]
pub fn floor_variance(v: f64) -> f64 {
    if v < VARIANCE_FLOOR {
        VARIANCE_FLOOR
    } else {
        v
    }
}

/// Log-density without argument checks; `var` must be positive.
#[inline]
pub fn ln_gauss_pdf_unchecked<S: Scalar>(x: S, mean: S, var: f64) -> f64 {
    let d2 = (x - mean).abs2();
    match S::FIELD {
        Field::Real => -0.5 * d2 / var - 0.5 * (2.0 * PI * var).ln(),
        Field::Complex => -d2 / var - (PI * var).ln(),
    }
}

pub fn gauss_pdf<S: Scalar>(x: S, mean: S, var: f64) -> Result<f64> {
    Ok(ln_gauss_pdf(x, mean, var)?.exp())
}

pub fn ln_gauss_pdf<S: Scalar>(x: S, mean: S, var: f64) -> Result<f64> {
    if !(var > 0.0) {
        return domain(format!("Gaussian variance must be positive, got {var}"));
    }
    Ok(ln_gauss_pdf_unchecked(x, mean, var))
}

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
