//! Field abstraction shared by the real and complex code paths.
//!
//! Every formula in the crate is written once against [`Scalar`]; `|x|²` is
//! always `x·x*`, which collapses to `x²` on the reals.

use std::fmt::Debug;
use std::ops::Neg;

use ndarray::LinalgScalar;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Which field a solver run operates in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    Real,
    Complex,
}

pub trait Scalar:
    LinalgScalar + Neg<Output = Self> + Debug + PartialEq + Send + Sync + Default
{
    const FIELD: Field;

    fn conj(self) -> Self;
    /// Squared modulus `x·x*`.
    fn abs2(self) -> f64;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn from_re(re: f64) -> Self;
    /// Builds a value from real and imaginary parts. The imaginary part is
    /// discarded on the reals.
    fn from_parts(re: f64, im: f64) -> Self;
    fn scale(self, k: f64) -> Self;

    fn abs(self) -> f64 {
        self.abs2().sqrt()
    }

    fn is_finite(self) -> bool {
        self.re().is_finite() && self.im().is_finite()
    }

    /// Draws from 𝒩(0,1) or 𝒞𝒩(0,1) (unit total variance).
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn is_complex() -> bool {
        Self::FIELD == Field::Complex
    }
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn abs2(self) -> f64 {
        self * self
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn im(self) -> f64 {
        0.0
    }
    #[inline]
    fn from_re(re: f64) -> Self {
        re
    }
    #[inline]
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for Complex64 {
    const FIELD: Field = Field::Complex;

    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn im(self) -> f64 {
        self.im
    }
    #[inline]
    fn from_re(re: f64) -> Self {
        Complex64::new(re, 0.0)
    }
    #[inline]
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn abs(self) -> f64 {
        self.norm()
    }
    fn sample_standard<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}
