//! Reference lines for phase diagrams.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `ρP/(P−1)`: fewer measurements cannot determine signal and gains.
pub fn alpha_min(rho: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return domain("alpha_min needs P >= 2; a single sample cannot be calibrated");
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return domain(format!("rho must lie in (0, 1], got {rho}"));
    }
    Ok(rho * p as f64 / (p as f64 - 1.0))
}

/// `α_CS/(1−ε)`: only working sensors carry information.
pub fn alpha_cal_faulty(alpha_cs: f64, epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return domain(format!("epsilon must lie in [0, 1), got {epsilon}"));
    }
    Ok(alpha_cs / (1.0 - epsilon))
}

/// Perfectly calibrated gains reduce to plain compressed sensing.
pub fn alpha_cal_gain(alpha_cs: f64) -> f64 {
    alpha_cs
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind {
    AlphaMin { p: usize },
    AlphaCalFaulty { epsilon: f64 },
    AlphaCalGain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    /// `(ρ, α)` pairs in increasing `ρ`.
    pub samples: Vec<(f64, f64)>,
}

impl BoundCurve {
    /// Evaluates a bound on `rhos`. `alpha_cs` is consulted for the
    /// calibrated lines only.
    pub fn build(kind: BoundKind, rhos: &[f64], alpha_cs: &dyn Fn(f64) -> f64) -> Result<Self> {
        if rhos.windows(2).any(|w| !(w[0] < w[1])) {
            return domain("rho grid must be strictly increasing");
        }
        let mut samples = Vec::with_capacity(rhos.len());
        for &rho in rhos {
            let alpha = match kind {
                BoundKind::AlphaMin { p } => {
                    if !(rho < (p as f64 - 1.0) / p as f64) {
                        return domain(format!("alpha_min({rho}, {p}) is not below 1"));
                    }
                    alpha_min(rho, p)?
                }
                BoundKind::AlphaCalFaulty { epsilon } => alpha_cal_faulty(alpha_cs(rho), epsilon)?,
                BoundKind::AlphaCalGain => alpha_cal_gain(alpha_cs(rho)),
            };
            samples.push((rho, alpha));
        }
        Ok(BoundCurve { kind, samples })
    }

    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].1 <= w[1].1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,alpha\n");
        for (r, a) in &self.samples {
            s.push_str(&format!("{r},{a}\n"));
        }
        s
    }
}

/// Bisection for the smallest `α` in `[lo, hi]` at which `succeeds` holds,
/// assuming failure below and success above a single threshold. Returns the
/// midpoint of the final bracket.
pub fn bisect_transition(mut lo: f64, mut hi: f64, steps: usize, mut succeeds: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if succeeds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
