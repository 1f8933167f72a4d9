//! Slow reference implementations used to validate the TAP solver.
//!
//! [`gamp_reference`] is a plain GAMP loop in `(p, τp, ŝ, r, τr)` form with
//! explicit index loops. [`bp_solve`] passes one Gaussian message per edge of
//! the factor graph.

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;

use crate::channels::{ChannelRow, GainUpdate, OutputChannel, DELTA_FLOOR};
use crate::error::{Error, Result};
use crate::kernels::gauss::{floor_variance, ln_gauss_pdf_unchecked};
use crate::kernels::quadrature::integrate_adaptive;
use crate::priors::{GainEstimate, GainFlag, GainPrior, SignalPrior};
use crate::scalar::Scalar;
use crate::solver::SolverConfig;

/// Single-sample gain channel with `d` integrated out:
/// returns `(ẑ, z̄)` for a measurement `y` and prior `𝒩(z; Ẑ, Z̄)`.
pub fn marginal_gain_moments<S: Scalar>(prior: &GainPrior, delta: f64, zhat: S, zbar: f64, y: S) -> Result<(S, f64)> {
    let delta = delta.max(DELTA_FLOOR);
    let zbar = floor_variance(zbar);
    let total = delta + zbar;
    let (dm, dv) = if y.abs2() > 0.0 {
        let g = prior.update(zhat / y, total / y.abs2(), 1)?;
        (g.mean, g.var)
    } else {
        let (m, v) = prior.moments();
        (S::from_re(m), v)
    };
    let zh = (zhat.scale(delta) + (y * dm).scale(zbar)).scale(1.0 / total);
    let zb = delta * zbar / total + y.abs2() * dv * (zbar / total).powi(2);
    Ok((zh, zb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GampIterate<S> {
    pub x_hat: Array2<S>,
    pub x_bar: Array2<f64>,
    /// Output-side mean and variance `p`, `τp`.
    pub p: Array2<S>,
    pub tau_p: Array2<f64>,
    /// Input-side pseudo-observation `r`, `τr`.
    pub r: Array2<S>,
    pub tau_r: Array2<f64>,
    pub z_hat: Array2<S>,
    pub z_bar: Array2<f64>,
}

fn blend_var(new: f64, old: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        new
    } else {
        let inv = beta / new + (1.0 - beta) / (beta * old);
        1.0 / inv
    }
}

fn blend_mean<S: Scalar>(new: S, old: S, beta: f64, damped: f64, raw: f64) -> S {
    if beta == 1.0 {
        new
    } else {
        let w = beta * damped / raw;
        old + (new - old).scale(w)
    }
}

/// `iterations` GAMP sweeps with damping `beta` on `τp, p, τr, r`.
/// `out(μ, p, τp, y)` returns the posterior `(ẑ, z̄)` of each output.
pub fn gamp_reference<S: Scalar>(
    f: ArrayView2<S>,
    y: ArrayView2<S>,
    prior: &SignalPrior,
    out: &dyn Fn(usize, S, f64, S) -> Result<(S, f64)>,
    beta: f64,
    floor: f64,
    iterations: usize,
) -> Result<Vec<GampIterate<S>>> {
    let (m, n) = f.dim();
    let k = y.ncols();
    let mut x_hat = Array2::<S>::zeros((n, k));
    let mut x_bar = Array2::from_elem((n, k), prior.variance());
    let mut p_old = y.to_owned();
    let mut tau_p_old = Array2::<f64>::ones((m, k));
    let mut s_hat = Array2::<S>::zeros((m, k));
    let mut r_old = Array2::<S>::zeros((n, k));
    let mut tau_r_old = Array2::<f64>::zeros((n, k));
    let mut trace = Vec::with_capacity(iterations);
    for t in 0..iterations {
        let mut p = Array2::<S>::zeros((m, k));
        let mut tau_p = Array2::<f64>::zeros((m, k));
        let mut z_hat = Array2::<S>::zeros((m, k));
        let mut z_bar = Array2::<f64>::zeros((m, k));
        let mut tau_s = Array2::<f64>::zeros((m, k));
        for l in 0..k {
            for mu in 0..m {
                let mut v = 0.0;
                let mut mean = S::zero();
                for i in 0..n {
                    v += f[[mu, i]].abs2() * x_bar[[i, l]];
                    mean = mean + f[[mu, i]] * x_hat[[i, l]];
                }
                let raw = v.max(floor);
                let tp = blend_var(raw, tau_p_old[[mu, l]], beta);
                let pm = blend_mean(mean - s_hat[[mu, l]].scale(tp), p_old[[mu, l]], beta, tp, raw);
                let (zh, zb) = out(mu, pm, tp, y[[mu, l]])?;
                p[[mu, l]] = pm;
                tau_p[[mu, l]] = tp;
                z_hat[[mu, l]] = zh;
                z_bar[[mu, l]] = zb;
                s_hat[[mu, l]] = (zh - pm).scale(1.0 / tp);
                tau_s[[mu, l]] = (tp - zb) / (tp * tp);
            }
        }
        let mut r = Array2::<S>::zeros((n, k));
        let mut tau_r = Array2::<f64>::zeros((n, k));
        for l in 0..k {
            for i in 0..n {
                let mut prec = 0.0;
                let mut corr = S::zero();
                for mu in 0..m {
                    prec += f[[mu, i]].abs2() * tau_s[[mu, l]];
                    corr = corr + f[[mu, i]].conj() * s_hat[[mu, l]];
                }
                let raw = (1.0 / prec.max(f64::MIN_POSITIVE)).max(floor);
                let tr = if t > 0 { blend_var(raw, tau_r_old[[i, l]], beta) } else { raw };
                let rm = x_hat[[i, l]] + corr.scale(tr);
                let rm = if t > 0 { blend_mean(rm, r_old[[i, l]], beta, tr, raw) } else { rm };
                r[[i, l]] = rm;
                tau_r[[i, l]] = tr;
            }
        }
        for ((xh, xb), (&rm, &tr)) in x_hat.iter_mut().zip(x_bar.iter_mut()).zip(r.iter().zip(tau_r.iter())) {
            let (a, b) = prior.denoise(rm, tr);
            *xh = a;
            *xb = b;
        }
        p_old = p.clone();
        tau_p_old = tau_p.clone();
        r_old = r.clone();
        tau_r_old = tau_r.clone();
        trace.push(GampIterate {
            x_hat: x_hat.clone(),
            x_bar: x_bar.clone(),
            p,
            tau_p,
            r,
            tau_r,
            z_hat,
            z_bar,
        });
    }
    Ok(trace)
}

#[derive(Clone, Debug)]
pub struct BpResult<S> {
    pub x_hat: Array2<S>,
    pub x_bar: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Sum-product message passing with Gaussian-projected messages on every
/// edge. Cost per sweep is `O(M·N·P)` channel evaluations.
pub fn bp_solve<S: Scalar, C: OutputChannel<S> + ?Sized>(
    f: ArrayView2<S>,
    y: ArrayView2<S>,
    prior: &SignalPrior,
    channel: &C,
    config: &SolverConfig,
) -> Result<BpResult<S>> {
    config.validate()?;
    let (m, n) = f.dim();
    if y.nrows() != m {
        return Err(Error::Shape(format!("F has {m} rows but y has {}", y.nrows())));
    }
    let k = y.ncols();
    let floor = config.variance_floor;
    let beta = config.beta;
    // x → factor messages, indexed [l, i, μ].
    let mut xm_hat = Array3::<S>::zeros((k, n, m));
    let mut xm_bar = Array3::from_elem((k, n, m), prior.variance());
    // factor → x message parameters and the damped edge fields.
    let mut a = Array3::<S>::zeros((k, n, m));
    let mut b = Array3::<f64>::zeros((k, n, m));
    let mut ze_hat = Array3::<S>::zeros((k, n, m));
    let mut ze_bar = Array3::<f64>::ones((k, n, m));
    let mut cav_hat = Array3::<S>::zeros((k, n, m));
    let mut cav_bar = Array3::<f64>::ones((k, n, m));
    let mut x_hat = Array2::<S>::zeros((n, k));
    let mut x_bar = Array2::from_elem((n, k), prior.variance());
    let mut full_hat = Array2::<S>::zeros((m, k));
    let mut full_bar = Array2::<f64>::zeros((m, k));
    let (mut rh, mut rb, mut ry) = (vec![S::zero(); k], vec![0.0; k], vec![S::zero(); k]);
    let mut converged = false;
    let mut t = 0;
    while t < config.t_max {
        for l in 0..k {
            for mu in 0..m {
                let (mut h, mut v) = (S::zero(), 0.0);
                for i in 0..n {
                    h = h + f[[mu, i]] * xm_hat[[l, i, mu]];
                    v += f[[mu, i]].abs2() * xm_bar[[l, i, mu]];
                }
                full_hat[[mu, l]] = h;
                full_bar[[mu, l]] = v;
            }
        }
        for mu in 0..m {
            for l in 0..k {
                for mm in 0..k {
                    rh[mm] = full_hat[[mu, mm]];
                    rb[mm] = full_bar[[mu, mm]].max(floor);
                    ry[mm] = y[[mu, mm]];
                }
                for i in 0..n {
                    let fi = f[[mu, i]];
                    let raw_bar = (full_bar[[mu, l]] - fi.abs2() * xm_bar[[l, i, mu]]).max(floor);
                    let raw_hat = full_hat[[mu, l]] - fi * xm_hat[[l, i, mu]];
                    let (zh_e, zb_e) = if t > 0 {
                        let vb = blend_var(raw_bar, ze_bar[[l, i, mu]], beta);
                        (blend_mean(raw_hat, ze_hat[[l, i, mu]], beta, vb, raw_bar), vb)
                    } else {
                        (raw_hat, raw_bar)
                    };
                    ze_hat[[l, i, mu]] = zh_e;
                    ze_bar[[l, i, mu]] = zb_e;
                    rh[l] = zh_e;
                    rb[l] = zb_e;
                    let o = channel.moments(mu, l, &ChannelRow::new(&rh, &rb, &ry)?)?;
                    a[[l, i, mu]] = (fi.conj() * (o.zhat - zh_e)).scale(1.0 / zb_e);
                    b[[l, i, mu]] = fi.abs2() * (zb_e - o.zbar) / (zb_e * zb_e);
                }
            }
        }
        let mut delta_x = 0.0;
        for l in 0..k {
            for i in 0..n {
                let (mut sa, mut sb) = (S::zero(), 0.0);
                for mu in 0..m {
                    sa = sa + a[[l, i, mu]];
                    sb += b[[l, i, mu]];
                }
                for mu in 0..m {
                    let raw_bar = (1.0 / (sb - b[[l, i, mu]]).max(f64::MIN_POSITIVE)).max(floor);
                    let raw_hat = (sa - a[[l, i, mu]]).scale(raw_bar);
                    let (ch, cb) = if t > 0 {
                        let vb = blend_var(raw_bar, cav_bar[[l, i, mu]], beta);
                        (blend_mean(raw_hat, cav_hat[[l, i, mu]], beta, vb, raw_bar), vb)
                    } else {
                        (raw_hat, raw_bar)
                    };
                    cav_hat[[l, i, mu]] = ch;
                    cav_bar[[l, i, mu]] = cb;
                    let (xh, xb) = prior.denoise(ch, cb);
                    xm_hat[[l, i, mu]] = xh;
                    xm_bar[[l, i, mu]] = xb;
                }
                let vb = (1.0 / sb.max(f64::MIN_POSITIVE)).max(floor);
                let (xh, xb) = prior.denoise(sa.scale(vb), vb);
                if !xh.is_finite() || !xb.is_finite() {
                    return Err(Error::Divergence { iteration: t, field: "belief" });
                }
                delta_x += (xh - x_hat[[i, l]]).abs2();
                x_hat[[i, l]] = xh;
                x_bar[[i, l]] = xb;
            }
        }
        t += 1;
        if delta_x / ((n * k) as f64) < config.tol {
            converged = true;
            break;
        }
    }
    Ok(BpResult { x_hat, x_bar, iterations: t, converged })
}

/// `∫∫ f(a,b) da db` over the square of half-width `half` centred on `c`.
pub fn integrate_square(f: &dyn Fn(f64, f64) -> f64, c: Complex64, half: f64) -> f64 {
    let inner = |a: f64| integrate_adaptive(|b| f(a, b), c.im - half, c.im + half, 8, 1e-12, 0.0).value;
    integrate_adaptive(inner, c.re - half, c.re + half, 8, 1e-11, 0.0).value
}

/// Bayes posterior of a complex gain under `𝒞𝒩(d; 0, prior_var)` and the
/// row weight `|d|^{2P} 𝒞𝒩(d; D̂, D̄)`, by 2-D quadrature.
#[derive(Clone, Copy, Debug)]
pub struct ComplexBayesGain {
    pub prior_var: f64,
}

impl GainUpdate<Complex64> for ComplexBayesGain {
    fn update(&self, dhat: Complex64, dbar: f64, p: u32) -> Result<GainEstimate<Complex64>> {
        let zero = Complex64::new(0.0, 0.0);
        let peak = ln_gauss_pdf_unchecked(dhat, dhat, dbar);
        let w = |a: f64, b: f64| {
            let d = Complex64::new(a, b);
            (ln_gauss_pdf_unchecked(d, zero, self.prior_var) + p as f64 * d.norm_sqr().ln()
                + ln_gauss_pdf_unchecked(d, dhat, dbar)
                - peak)
                .exp()
        };
        let half = 12.0 * dbar.sqrt();
        let w0 = integrate_square(&w, dhat, half);
        if !(w0 > 0.0) {
            return Err(Error::Domain("complex gain posterior has no mass".into()));
        }
        let mre = integrate_square(&|a, b| a * w(a, b), dhat, half) / w0;
        let mim = integrate_square(&|a, b| b * w(a, b), dhat, half) / w0;
        let var = integrate_square(&|a, b| ((a - mre).powi(2) + (b - mim).powi(2)) * w(a, b), dhat, half) / w0;
        Ok(GainEstimate { mean: Complex64::new(mre, mim), var, flag: GainFlag::Regular })
    }

    fn prior_moments(&self) -> (Complex64, f64) {
        (Complex64::new(0.0, 0.0), self.prior_var)
    }
}

/// `(ẑ_l, z̄_l)` for a complex gain row with prior `𝒞𝒩(d; 0, prior_var)`,
/// integrating `∏ₘ |d|² 𝒞𝒩(d·yₘ; Ẑₘ, Δ+Z̄ₘ)` over `d` directly.
/// `centre` and `spread` locate the `d` posterior for the integration box.
pub fn complex_gain_row_quadrature(
    row: &ChannelRow<Complex64>,
    l: usize,
    delta: f64,
    prior_var: f64,
    centre: Complex64,
    spread: f64,
) -> (Complex64, f64) {
    let zero = Complex64::new(0.0, 0.0);
    let lw = |a: f64, b: f64| {
        let d = Complex64::new(a, b);
        let mut s = ln_gauss_pdf_unchecked(d, zero, prior_var);
        for m in 0..row.len() {
            s += d.norm_sqr().ln() + ln_gauss_pdf_unchecked(d * row.y[m], row.zhat[m], delta + row.zbar[m]);
        }
        s
    };
    let peak = lw(centre.re, centre.im);
    let w = |a: f64, b: f64| (lw(a, b) - peak).exp();
    let (zh, zb, y) = (row.zhat[l], row.zbar[l], row.y[l]);
    let zpost = |a: f64, b: f64| (zh * delta + Complex64::new(a, b) * y * zb) / (delta + zb);
    let half = 12.0 * spread.sqrt();
    let w0 = integrate_square(&w, centre, half);
    let re = integrate_square(&|a, b| zpost(a, b).re * w(a, b), centre, half) / w0;
    let im = integrate_square(&|a, b| zpost(a, b).im * w(a, b), centre, half) / w0;
    let mean = Complex64::new(re, im);
    let spread_z = integrate_square(&|a, b| (zpost(a, b) - mean).norm_sqr() * w(a, b), centre, half) / w0;
    (mean, delta * zb / (delta + zb) + spread_z)
}
