//! The TAP iteration over beliefs with Onsager corrections.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::channels::{ChannelOutput, ChannelRow, OutputChannel};
use crate::error::{Error, Result};
use crate::kernels::gauss::VARIANCE_FLOOR;
use crate::priors::SignalPrior;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub beta: f64,
    pub t_max: usize,
    pub tol: f64,
    #[serde(default = "default_floor")]
    pub variance_floor: f64,
}

fn default_floor() -> f64 {
    VARIANCE_FLOOR
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { beta: 1.0, t_max: 300, tol: 1e-12, variance_floor: VARIANCE_FLOOR }
    }
}

impl SolverConfig {
    pub fn with_beta(beta: f64) -> Self {
        SolverConfig { beta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.t_max < 1 {
            return Err(Error::Config("t_max must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::Config(format!("variance_floor must be positive, got {}", self.variance_floor)));
        }
        Ok(())
    }
}

/// `(β/var₀ + ((1−β)/β)/var_old)⁻¹`; `β = 1` returns `new` unchanged.
pub fn damp_variance(new: f64, old: f64, beta: f64) -> f64 {
    if beta >= 1.0 {
        return new;
    }
    1.0 / (beta / new + (1.0 - beta) / beta / old)
}

/// `β'·new + (1−β')·old` with `β' = β·var_damped/var_new`.
pub fn damp_mean<S: Scalar>(new: S, old: S, beta: f64, var_damped: f64, var_new: f64) -> S {
    if beta >= 1.0 {
        return new;
    }
    let b = beta * var_damped / var_new;
    new.scale(b) + old.scale(1.0 - b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Damped {
    Variance,
    /// A mean paired with its variance after and before damping.
    Mean { var_damped: f64, var_new: f64 },
}

pub fn damping_update<S: Scalar>(new: S, old: S, beta: f64, kind: Damped) -> S {
    match kind {
        Damped::Variance => S::from_re(damp_variance(new.re(), old.re(), beta)),
        Damped::Mean { var_damped, var_new } => damp_mean(new, old, beta, var_damped, var_new),
    }
}

/// `F` together with the derived operators the sweep needs.
#[derive(Clone, Debug)]
pub struct Operator<S> {
    pub f: Array2<S>,
    /// Conjugate transpose of `F`.
    pub f_h: Array2<S>,
    pub f_abs2: Array2<f64>,
    pub f_abs2_t: Array2<f64>,
}

impl<S: Scalar> Operator<S> {
    pub fn new(f: ArrayView2<S>) -> Self {
        let f_abs2 = f.mapv(|v| v.abs2());
        Operator {
            f: f.to_owned(),
            f_h: f.t().mapv(|v| v.conj()),
            f_abs2_t: f_abs2.t().as_standard_layout().into_owned(),
            f_abs2,
        }
    }

    pub fn m(&self) -> usize {
        self.f.nrows()
    }

    pub fn n(&self) -> usize {
        self.f.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState<S> {
    /// Posterior means `x̂` (N×P).
    pub x_hat: Array2<S>,
    pub x_bar: Array2<f64>,
    /// Cavity fields `X̂`, `X̄`.
    pub cav_hat: Array2<S>,
    pub cav_bar: Array2<f64>,
    /// Linear-step estimates `Ẑ`, `Z̄` (M×P).
    pub lin_hat: Array2<S>,
    pub lin_bar: Array2<f64>,
    /// Channel posteriors `ẑ`, `z̄`.
    pub z_hat: Array2<S>,
    pub z_bar: Array2<f64>,
    /// Per-entry gain posterior means when the channel estimates `d`.
    pub d_hat: Option<Array2<S>>,
    pub d_bar: Option<Array2<f64>>,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: usize,
    /// Mean of `|Δx̂|²` over all entries.
    pub delta_x: f64,
    pub min_variance: f64,
    pub max_variance: f64,
    pub zero_evidence: usize,
}

fn check_shapes<S: Scalar>(op: &Operator<S>, y: ArrayView2<S>) -> Result<()> {
    if op.m() == 0 || op.n() == 0 || y.ncols() == 0 {
        return Err(Error::Shape("empty problem".into()));
    }
    if y.nrows() != op.m() {
        return Err(Error::Shape(format!("F has {} rows but y has {}", op.m(), y.nrows())));
    }
    Ok(())
}

/// Initial state: `x̂ = 0`, `x̄ = ρσ²`, `Ẑ = ẑ = y`, `Z̄ = z̄ = 1`.
pub fn initialize<S: Scalar>(n: usize, y: ArrayView2<S>, prior: &SignalPrior) -> SolverState<S> {
    let (m, p) = y.dim();
    SolverState {
        x_hat: Array2::zeros((n, p)),
        x_bar: Array2::from_elem((n, p), prior.variance()),
        cav_hat: Array2::zeros((n, p)),
        cav_bar: Array2::from_elem((n, p), f64::INFINITY),
        lin_hat: y.to_owned(),
        lin_bar: Array2::ones((m, p)),
        z_hat: y.to_owned(),
        z_bar: Array2::ones((m, p)),
        d_hat: None,
        d_bar: None,
        t: 0,
    }
}

fn finite_scalar<S: Scalar>(a: &Array2<S>, t: usize, field: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration: t, field })
    }
}

fn finite_real(a: &Array2<f64>, t: usize, field: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration: t, field })
    }
}

/// One full sweep. On success `state` holds the new iterate; on error it is
/// left untouched.
pub fn iterate<S: Scalar, C: OutputChannel<S> + ?Sized>(
    state: &mut SolverState<S>,
    op: &Operator<S>,
    y: ArrayView2<S>,
    prior: &SignalPrior,
    channel: &C,
    config: &SolverConfig,
) -> Result<Diagnostics> {
    check_shapes(op, y)?;
    let (m, p) = y.dim();
    let beta = config.beta;
    let floor = config.variance_floor;
    let t = state.t;

    let mut lin_bar = op.f_abs2.dot(&state.x_bar);
    lin_bar.mapv_inplace(|v| v.max(floor));
    let lin_bar_raw = lin_bar.clone();
    Zip::from(&mut lin_bar).and(&state.lin_bar).for_each(|v, &old| *v = damp_variance(*v, old, beta));

    // Onsager term uses the previous channel output and linear estimates.
    let mut lin_hat = op.f.dot(&state.x_hat);
    Zip::from(&mut lin_hat)
        .and(&lin_bar)
        .and(&state.z_hat)
        .and(&state.lin_hat)
        .and(&state.lin_bar)
        .for_each(|v, &zb, &zh_old, &lh_old, &lb_old| *v = *v - (zh_old - lh_old).scale(zb / lb_old));
    Zip::from(&mut lin_hat)
        .and(&state.lin_hat)
        .and(&lin_bar)
        .and(&lin_bar_raw)
        .for_each(|v, &old, &vd, &v0| *v = damp_mean(*v, old, beta, vd, v0));
    finite_scalar(&lin_hat, t, "lin_hat")?;
    finite_real(&lin_bar, t, "lin_bar")?;

    let mut z_hat = Array2::<S>::zeros((m, p));
    let mut z_bar = Array2::<f64>::zeros((m, p));
    let mut d_hat: Option<Array2<S>> = None;
    let mut d_bar: Option<Array2<f64>> = None;
    let mut zero_evidence = 0usize;
    let mut out: Vec<ChannelOutput<S>> = Vec::with_capacity(p);
    let (mut rh, mut rb, mut ry) = (vec![S::zero(); p], vec![0.0; p], vec![S::zero(); p]);
    for mu in 0..m {
        for l in 0..p {
            rh[l] = lin_hat[[mu, l]];
            rb[l] = lin_bar[[mu, l]];
            ry[l] = y[[mu, l]];
        }
        let row = ChannelRow::new(&rh, &rb, &ry)?;
        channel.row_moments(mu, &row, &mut out)?;
        for (l, o) in out.iter().enumerate() {
            z_hat[[mu, l]] = o.zhat;
            z_bar[[mu, l]] = o.zbar;
            if o.zero_evidence {
                zero_evidence += 1;
            }
            if let Some(g) = o.gain {
                d_hat.get_or_insert_with(|| Array2::zeros((m, p)))[[mu, l]] = g.mean;
                d_bar.get_or_insert_with(|| Array2::zeros((m, p)))[[mu, l]] = g.var;
            }
        }
    }
    finite_scalar(&z_hat, t, "z_hat")?;
    finite_real(&z_bar, t, "z_bar")?;

    let mut precision_terms = Array2::<f64>::zeros((m, p));
    let mut gout = Array2::<S>::zeros((m, p));
    Zip::from(&mut precision_terms)
        .and(&mut gout)
        .and(&lin_bar)
        .and(&lin_hat)
        .and(&z_bar)
        .and(&z_hat)
        .for_each(|pt, g, &lb, &lh, &zb, &zh| {
            *pt = (lb - zb) / (lb * lb);
            *g = (zh - lh).scale(1.0 / lb);
        });
    let mut cav_bar = op.f_abs2_t.dot(&precision_terms);
    cav_bar.mapv_inplace(|v| (1.0 / v.max(f64::MIN_POSITIVE)).max(floor));
    let cav_bar_raw = cav_bar.clone();
    if t > 0 {
        Zip::from(&mut cav_bar).and(&state.cav_bar).for_each(|v, &old| *v = damp_variance(*v, old, beta));
    }
    let mut cav_hat = op.f_h.dot(&gout);
    Zip::from(&mut cav_hat)
        .and(&cav_bar)
        .and(&state.x_hat)
        .for_each(|v, &xb, &xh| *v = xh + v.scale(xb));
    if t > 0 {
        Zip::from(&mut cav_hat)
            .and(&state.cav_hat)
            .and(&cav_bar)
            .and(&cav_bar_raw)
            .for_each(|v, &old, &vd, &v0| *v = damp_mean(*v, old, beta, vd, v0));
    }
    finite_scalar(&cav_hat, t, "cav_hat")?;
    finite_real(&cav_bar, t, "cav_bar")?;

    let mut x_hat = Array2::<S>::zeros(cav_hat.dim());
    let mut x_bar = Array2::<f64>::zeros(cav_hat.dim());
    Zip::from(&mut x_hat)
        .and(&mut x_bar)
        .and(&cav_hat)
        .and(&cav_bar)
        .for_each(|xh, xb, &ch, &cb| {
            let (a, b) = prior.denoise(ch, cb);
            *xh = a;
            *xb = b;
        });
    finite_scalar(&x_hat, t, "x_hat")?;
    finite_real(&x_bar, t, "x_bar")?;

    let delta_x = Zip::from(&x_hat)
        .and(&state.x_hat)
        .fold(0.0, |acc, &a, &b| acc + (a - b).abs2())
        / x_hat.len() as f64;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in x_bar.iter().chain(cav_bar.iter()).chain(lin_bar.iter()).chain(z_bar.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo < 0.0 {
        return Err(Error::Divergence { iteration: t, field: "negative variance" });
    }

    *state = SolverState {
        x_hat,
        x_bar,
        cav_hat,
        cav_bar,
        lin_hat,
        lin_bar,
        z_hat,
        z_bar,
        d_hat,
        d_bar,
        t: t + 1,
    };
    Ok(Diagnostics { t: t + 1, delta_x, min_variance: lo, max_variance: hi, zero_evidence })
}

/// Where the run stopped when it did not converge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub iteration: usize,
    pub field: String,
}

#[derive(Clone, Debug)]
pub struct SolveResult<S> {
    pub x_hat: Array2<S>,
    pub x_bar: Array2<f64>,
    pub z_hat: Array2<S>,
    pub z_bar: Array2<f64>,
    /// Per-sensor gain estimate averaged over samples.
    pub d_hat: Option<Array1<S>>,
    pub d_bar: Option<Array1<f64>>,
    pub history: Vec<Diagnostics>,
    pub iterations: usize,
    pub converged: bool,
    pub divergence: Option<DivergenceReport>,
    pub state: SolverState<S>,
}

fn row_average<T: Scalar>(a: &Array2<T>) -> Array1<T> {
    let p = a.ncols() as f64;
    a.rows().into_iter().map(|r| r.iter().fold(T::zero(), |s, &v| s + v).scale(1.0 / p)).collect()
}

/// Runs [`iterate`] until `mean|Δx̂|² < tol` or `t_max` sweeps. A divergence
/// stops the run and returns the last finite state.
pub fn solve<S: Scalar, C: OutputChannel<S> + ?Sized>(
    f: ArrayView2<S>,
    y: ArrayView2<S>,
    prior: &SignalPrior,
    channel: &C,
    config: &SolverConfig,
) -> Result<SolveResult<S>> {
    config.validate()?;
    prior.validate()?;
    let op = Operator::new(f);
    check_shapes(&op, y)?;
    let mut state = initialize(op.n(), y, prior);
    let mut history = Vec::new();
    let mut converged = false;
    let mut divergence = None;
    while state.t < config.t_max {
        match iterate(&mut state, &op, y, prior, channel, config) {
            Ok(d) => {
                history.push(d);
                if d.delta_x < config.tol {
                    converged = true;
                    break;
                }
            }
            Err(Error::Divergence { iteration, field }) => {
                divergence = Some(DivergenceReport { iteration, field: field.to_string() });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SolveResult {
        x_hat: state.x_hat.clone(),
        x_bar: state.x_bar.clone(),
        z_hat: state.lin_hat.clone(),
        z_bar: state.lin_bar.clone(),
        d_hat: state.d_hat.as_ref().map(row_average),
        d_bar: state.d_bar.as_ref().map(row_average),
        iterations: state.t,
        history,
        converged,
        divergence,
        state,
    })
}
