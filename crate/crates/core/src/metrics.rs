//! Reconstruction scores.

use ndarray::{ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A run counts as a success when `log₁₀(1−μ)` is below this.
pub const SUCCESS_LOG10_GAP: f64 = -5.0;

pub fn is_success(log10_gap: f64) -> bool {
    log10_gap < SUCCESS_LOG10_GAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub mu: f64,
    /// `log₁₀(max(1−μ, 1e−300))`.
    pub log10_gap: f64,
    pub per_column_mu: Vec<f64>,
    pub mse: f64,
    /// Columns with zero empirical variance, scored as 0.
    pub degenerate_columns: Vec<usize>,
}

impl RecoveryScore {
    pub fn success(&self) -> bool {
        is_success(self.log10_gap)
    }
}

pub fn log10_gap(mu: f64) -> f64 {
    (1.0 - mu).max(1e-300).log10()
}

fn column_correlation<S: Scalar>(a: ArrayView1<S>, b: ArrayView1<S>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().fold(S::zero(), |s, &v| s + v).scale(1.0 / n);
    let mb = b.iter().fold(S::zero(), |s, &v| s + v).scale(1.0 / n);
    let (mut cross, mut na, mut nb) = (S::zero(), 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b.iter()) {
        let (u, v) = (u - ma, v - mb);
        cross = cross + u.conj() * v;
        na += u.abs2();
        nb += v.abs2();
    }
    let denom = (na * nb).sqrt();
    if denom > 0.0 && denom.is_finite() {
        Some((cross.abs() / denom).min(1.0))
    } else {
        None
    }
}

fn same_shape<S>(a: &ArrayView2<S>, b: &ArrayView2<S>) -> Result<()> {
    if a.dim() != b.dim() || a.is_empty() {
        return Err(Error::Shape(format!("score inputs {:?} and {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Mean over columns of the modulus of the empirical correlation
/// coefficient. Invariant to a per-column nonzero complex factor on either
/// argument.
pub fn cross_correlation<S: Scalar>(x_true: ArrayView2<S>, x_hat: ArrayView2<S>) -> Result<RecoveryScore> {
    same_shape(&x_true, &x_hat)?;
    let mut per_column_mu = Vec::with_capacity(x_true.ncols());
    let mut degenerate_columns = Vec::new();
    for (l, (a, b)) in x_true.columns().into_iter().zip(x_hat.columns()).enumerate() {
        match column_correlation(a, b) {
            Some(mu) => per_column_mu.push(mu),
            None => {
                per_column_mu.push(0.0);
                degenerate_columns.push(l);
            }
        }
    }
    let mu = per_column_mu.iter().sum::<f64>() / per_column_mu.len() as f64;
    Ok(RecoveryScore { mu, log10_gap: log10_gap(mu), per_column_mu, mse: mse(x_true, x_hat)?, degenerate_columns })
}

/// `(1/NP)·Σ|x̂−x|²`.
pub fn mse<S: Scalar>(x_true: ArrayView2<S>, x_hat: ArrayView2<S>) -> Result<f64> {
    same_shape(&x_true, &x_hat)?;
    Ok(Zip::from(&x_true).and(&x_hat).fold(0.0, |s, &a, &b| s + (a - b).abs2()) / x_true.len() as f64)
}
