//! Incomplete gamma functions.
//!
//! Series expansion below `x = s + 1`, modified-Lentz continued fraction
//! above. Both branches produce the log of the regularized functions directly
//! so deep tails keep full relative precision.

use crate::error::{domain, Result};

/// `ln Γ(x)` for `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

const EPS: f64 = 1e-17;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

/// `(ln P(s,x), ln Q(s,x))` for the regularized lower/upper incomplete gamma
/// functions. `s > 0` and `x ≥ 0` are assumed.
pub fn ln_regularized_pq(s: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if x == f64::INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    let prefix = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..MAX_ITER {
            term *= x / (s + n as f64);
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let ln_p = prefix + sum.ln();
        let p = ln_p.exp();
        (ln_p, (-p).ln_1p())
    } else {
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let ln_q = prefix + h.ln();
        let q = ln_q.exp();
        ((-q).ln_1p(), ln_q)
    }
}

/// Regularized lower incomplete gamma `P(s,x) = γ(s,x)/Γ(s)`.
pub fn regularized_lower_gamma(s: f64, x: f64) -> Result<f64> {
    check(s, x)?;
    Ok(ln_regularized_pq(s, x).0.exp())
}

/// Regularized upper incomplete gamma `Q(s,x) = 1 − P(s,x)`.
pub fn regularized_upper_gamma(s: f64, x: f64) -> Result<f64> {
    check(s, x)?;
    Ok(ln_regularized_pq(s, x).1.exp())
}

/// Lower incomplete gamma `γ(s,x) = ∫₀ˣ t^{s−1} e^{−t} dt`.
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    check(s, x)?;
    Ok((ln_gamma(s) + ln_regularized_pq(s, x).0).exp())
}

fn check(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return domain(format!("incomplete gamma needs s > 0, got {s}"));
    }
    if !(x >= 0.0) {
        return domain(format!("incomplete gamma needs x >= 0, got {x}"));
    }
    Ok(())
}
