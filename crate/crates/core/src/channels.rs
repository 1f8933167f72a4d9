//! Output channels: posterior moments of `z` for one sensor row.
//!
//! A row carries the `P` entries `(Ẑ_m, Z̄_m, y_m)` of one sensor. Entry `l`
//! is the one being updated; the others only enter through the shared
//! distortion parameter `d`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::gauss::{floor_variance, ln_gauss_pdf_unchecked};
use crate::kernels::quadrature::integrate_adaptive;
use crate::priors::{logistic, GainEstimate, GainFlag, GainPrior};
use crate::scalar::{Field, Scalar};

/// Lower bound for the gain-channel noise variance.
pub const DELTA_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug)]
pub struct ChannelRow<'a, S> {
    pub zhat: &'a [S],
    pub zbar: &'a [f64],
    pub y: &'a [S],
}

impl<'a, S: Scalar> ChannelRow<'a, S> {
    pub fn new(zhat: &'a [S], zbar: &'a [f64], y: &'a [S]) -> Result<Self> {
        if zhat.is_empty() || zhat.len() != zbar.len() || zhat.len() != y.len() {
            return Err(Error::Shape(format!(
                "channel row lengths differ or are empty: {} / {} / {}",
                zhat.len(),
                zbar.len(),
                y.len()
            )));
        }
        Ok(ChannelRow { zhat, zbar, y })
    }

    pub fn len(&self) -> usize {
        self.zhat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zhat.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelOutput<S> {
    pub zhat: S,
    pub zbar: f64,
    /// Posterior moments of `d` for channels that estimate it.
    pub gain: Option<GainEstimate<S>>,
    pub zero_evidence: bool,
}

pub trait OutputChannel<S: Scalar>: Send + Sync {
    /// `(ẑ, z̄)` for entry `l` of sensor `mu`.
    fn moments(&self, mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>>;

    /// Whether the `P` entries of a row interact.
    fn couples_samples(&self) -> bool {
        true
    }

    /// Moments for every entry of the row, written into `out`.
    fn row_moments(&self, mu: usize, row: &ChannelRow<S>, out: &mut Vec<ChannelOutput<S>>) -> Result<()> {
        out.clear();
        for l in 0..row.len() {
            out.push(self.moments(mu, l, row)?);
        }
        Ok(())
    }
}

impl<S: Scalar, C: OutputChannel<S> + ?Sized> OutputChannel<S> for Arc<C> {
    fn moments(&self, mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>> {
        (**self).moments(mu, l, row)
    }

    fn couples_samples(&self) -> bool {
        (**self).couples_samples()
    }

    fn row_moments(&self, mu: usize, row: &ChannelRow<S>, out: &mut Vec<ChannelOutput<S>>) -> Result<()> {
        (**self).row_moments(mu, row, out)
    }
}

impl<S: Scalar, C: OutputChannel<S> + ?Sized> OutputChannel<S> for Box<C> {
    fn moments(&self, mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>> {
        (**self).moments(mu, l, row)
    }

    fn couples_samples(&self) -> bool {
        (**self).couples_samples()
    }

    fn row_moments(&self, mu: usize, row: &ChannelRow<S>, out: &mut Vec<ChannelOutput<S>>) -> Result<()> {
        (**self).row_moments(mu, row, out)
    }
}

/// Serializable channel description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ChannelKind {
    /// A fraction `epsilon` of sensors output `𝒩(m_f, sigma_f)` noise.
    /// `sigma_f` is a variance; when absent it defaults to the signal's `z`
    /// variance `ρσ²`.
    Faulty {
        epsilon: f64,
        #[serde(default)]
        m_f: f64,
        #[serde(default)]
        sigma_f: Option<f64>,
    },
    RealGain { delta: f64, gain_prior: GainPrior },
    ComplexGain { delta: f64, gain_prior: GainPrior },
    /// Gains known exactly (taken from the instance).
    Calibrated {
        #[serde(default)]
        delta: f64,
    },
}

impl ChannelKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelKind::Faulty { epsilon, m_f, sigma_f } => {
                if !(0.0..=1.0).contains(&epsilon) {
                    return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
                }
                if !m_f.is_finite() {
                    return Err(Error::Config(format!("m_f must be finite, got {m_f}")));
                }
                if let Some(s) = sigma_f {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::Config(format!("sigma_f must be positive, got {s}")));
                    }
                }
            }
            ChannelKind::RealGain { delta, gain_prior } | ChannelKind::ComplexGain { delta, gain_prior } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
                }
                gain_prior.validate()?;
            }
            ChannelKind::Calibrated { delta } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
                }
            }
        }
        Ok(())
    }

    /// Field this channel requires, if it is tied to one.
    pub fn field(&self) -> Option<Field> {
        match self {
            ChannelKind::Faulty { .. } | ChannelKind::RealGain { .. } => Some(Field::Real),
            ChannelKind::ComplexGain { .. } => Some(Field::Complex),
            ChannelKind::Calibrated { .. } => None,
        }
    }

    pub fn is_gain(&self) -> bool {
        matches!(self, ChannelKind::RealGain { .. } | ChannelKind::ComplexGain { .. })
    }

    /// Damping used when the configuration does not set one.
    pub fn default_damping(&self) -> f64 {
        if self.is_gain() {
            0.8
        } else {
            1.0
        }
    }

    pub fn noise_variance(&self) -> f64 {
        match *self {
            ChannelKind::RealGain { delta, .. } | ChannelKind::ComplexGain { delta, .. } => delta,
            ChannelKind::Calibrated { delta } => delta,
            ChannelKind::Faulty { .. } => 0.0,
        }
    }

    /// Builds the channel used by the solver. `d_cal` supplies per-sensor
    /// gains for the calibrated variant; `signal_variance` resolves a missing
    /// `sigma_f`.
    pub fn build<S: Scalar>(&self, d_cal: &[S], signal_variance: f64) -> Result<Box<dyn OutputChannel<S>>> {
        self.validate()?;
        if let Some(f) = self.field() {
            if f != S::FIELD {
                return Err(Error::Config(format!("channel {self:?} cannot run on the {:?} field", S::FIELD)));
            }
        }
        Ok(match *self {
            ChannelKind::Faulty { epsilon, m_f, sigma_f } => {
                Box::new(FaultyChannel { epsilon, m_f, sigma_f: sigma_f.unwrap_or(signal_variance) })
            }
            ChannelKind::RealGain { delta, gain_prior } | ChannelKind::ComplexGain { delta, gain_prior } => {
                Box::new(GainChannel::new(delta, gain_prior))
            }
            ChannelKind::Calibrated { delta } => Box::new(CalibratedChannel { delta, d_cal: d_cal.to_vec() }),
        })
    }
}

/// Two-state sensor: working (`y = z`) with probability `1−ε`, otherwise
/// `y ~ 𝒩(m_f, σ_f)` independently of `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultyChannel {
    pub epsilon: f64,
    pub m_f: f64,
    /// Variance of a faulty reading.
    pub sigma_f: f64,
}

impl FaultyChannel {
    /// Posterior probability that the sensor is faulty.
    pub fn fault_probability<S: Scalar>(&self, row: &ChannelRow<S>) -> f64 {
        if self.epsilon <= 0.0 {
            return 0.0;
        }
        if self.epsilon >= 1.0 {
            return 1.0;
        }
        let mf = S::from_re(self.m_f);
        let mut ln_f = 0.0;
        let mut ln_z = 0.0;
        for m in 0..row.len() {
            ln_f += ln_gauss_pdf_unchecked(row.y[m], mf, self.sigma_f);
            ln_z += ln_gauss_pdf_unchecked(row.y[m], row.zhat[m], floor_variance(row.zbar[m]));
        }
        logistic(self.epsilon.ln() + ln_f - (-self.epsilon).ln_1p() - ln_z)
    }
}

fn faulty_entry<S: Scalar>(w: f64, l: usize, row: &ChannelRow<S>) -> ChannelOutput<S> {
    let (zh, yl) = (row.zhat[l], row.y[l]);
    let zhat = zh.scale(w) + yl.scale(1.0 - w);
    let zbar = w * row.zbar[l] + w * (1.0 - w) * (zh - yl).abs2();
    ChannelOutput { zhat, zbar, gain: None, zero_evidence: false }
}

impl<S: Scalar> OutputChannel<S> for FaultyChannel {
    fn moments(&self, _mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>> {
        Ok(faulty_entry(self.fault_probability(row), l, row))
    }

    fn row_moments(&self, _mu: usize, row: &ChannelRow<S>, out: &mut Vec<ChannelOutput<S>>) -> Result<()> {
        let w = self.fault_probability(row);
        out.clear();
        out.extend((0..row.len()).map(|l| faulty_entry(w, l, row)));
        Ok(())
    }
}

/// Rule producing posterior moments of `d` from the combined Gaussian
/// evidence `𝒩(d; D̂, D̄)` of a row with `P` entries.
pub trait GainUpdate<S: Scalar>: Send + Sync {
    fn update(&self, dhat: S, dbar: f64, p: u32) -> Result<GainEstimate<S>>;
    /// `(mean, variance)` returned when the row carries no evidence.
    fn prior_moments(&self) -> (S, f64);
}

impl<S: Scalar> GainUpdate<S> for GainPrior {
    fn update(&self, dhat: S, dbar: f64, p: u32) -> Result<GainEstimate<S>> {
        GainPrior::update(self, dhat, dbar, p)
    }

    fn prior_moments(&self) -> (S, f64) {
        let (m, v) = self.moments();
        (S::from_re(m), v)
    }
}

/// `y = (z + w)/d` with `w ~ 𝒩(0, Δ)` and one unknown `d` per sensor.
#[derive(Clone, Debug)]
pub struct GainChannel<U = GainPrior> {
    pub delta: f64,
    pub update: U,
}

impl GainChannel<GainPrior> {
    pub fn new(delta: f64, prior: GainPrior) -> Self {
        GainChannel { delta, update: prior }
    }
}

impl<U> GainChannel<U> {
    /// Replaces the `d` update, e.g. by a reference posterior in tests.
    pub fn with_update<V>(self, update: V) -> GainChannel<V> {
        GainChannel { delta: self.delta, update }
    }

    /// `(D̂, D̄)` for a row, or `None` when every `y_m` is zero.
    pub fn evidence<S: Scalar>(&self, row: &ChannelRow<S>) -> Option<(S, f64)> {
        let delta = self.delta.max(DELTA_FLOOR);
        let mut precision = 0.0;
        let mut weighted = S::zero();
        for m in 0..row.len() {
            let inv = 1.0 / (delta + floor_variance(row.zbar[m]));
            precision += row.y[m].abs2() * inv;
            weighted = weighted + (row.zhat[m] * row.y[m].conj()).scale(inv);
        }
        if !(precision > 0.0) {
            return None;
        }
        let dbar = 1.0 / precision;
        Some((weighted.scale(dbar), dbar))
    }
}

impl<U> GainChannel<U> {
    fn gain_estimate<S: Scalar>(&self, row: &ChannelRow<S>) -> Result<(GainEstimate<S>, bool)>
    where
        U: GainUpdate<S>,
    {
        Ok(match self.evidence(row) {
            Some((dhat, dbar)) => {
                let g = self.update.update(dhat, dbar, row.len() as u32)?;
                let ze = g.flag == GainFlag::ZeroEvidence;
                (g, ze)
            }
            None => {
                let (m, v) = self.update.prior_moments();
                (GainEstimate { mean: m, var: v, flag: GainFlag::ZeroEvidence }, true)
            }
        })
    }

    fn entry<S: Scalar>(&self, l: usize, row: &ChannelRow<S>, gain: GainEstimate<S>, zero_evidence: bool) -> ChannelOutput<S> {
        let delta = self.delta.max(DELTA_FLOOR);
        let zbar_l = floor_variance(row.zbar[l]);
        let r = zbar_l / (delta + zbar_l);
        let keep = delta / (delta + zbar_l);
        let yl = row.y[l];
        let zhat = row.zhat[l].scale(keep) + (yl * gain.mean).scale(r);
        let zbar = delta * r + r * r * yl.abs2() * gain.var;
        ChannelOutput { zhat, zbar, gain: Some(gain), zero_evidence }
    }
}

impl<S: Scalar, U: GainUpdate<S>> OutputChannel<S> for GainChannel<U> {
    fn moments(&self, _mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>> {
        let (gain, ze) = self.gain_estimate(row)?;
        Ok(self.entry(l, row, gain, ze))
    }

    fn row_moments(&self, _mu: usize, row: &ChannelRow<S>, out: &mut Vec<ChannelOutput<S>>) -> Result<()> {
        let (gain, ze) = self.gain_estimate(row)?;
        out.clear();
        out.extend((0..row.len()).map(|l| self.entry(l, row, gain, ze)));
        Ok(())
    }
}

/// Gains known per sensor: `y = (z + w)/d_cal`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedChannel<S> {
    pub delta: f64,
    pub d_cal: Vec<S>,
}

impl<S: Scalar> OutputChannel<S> for CalibratedChannel<S> {
    fn moments(&self, mu: usize, l: usize, row: &ChannelRow<S>) -> Result<ChannelOutput<S>> {
        let d = *self
            .d_cal
            .get(mu)
            .ok_or_else(|| Error::Shape(format!("no calibrated gain for sensor {mu}")))?;
        let zbar_l = floor_variance(row.zbar[l]);
        let w = zbar_l / (self.delta + zbar_l);
        let zh = row.zhat[l];
        let zhat = zh + (d * row.y[l] - zh).scale(w);
        Ok(ChannelOutput { zhat, zbar: self.delta * w, gain: None, zero_evidence: false })
    }

    fn couples_samples(&self) -> bool {
        false
    }
}

/// `g_out = (ẑ−Ẑ)/Z̄`, `g_out' = (z̄−Z̄)/Z̄²`.
pub fn gamp_gout<S: Scalar>(zhat_post: S, zhat: S, zbar_post: f64, zbar: f64) -> (S, f64) {
    ((zhat_post - zhat).scale(1.0 / zbar), (zbar_post - zbar) / (zbar * zbar))
}

/// Inverse of [`gamp_gout`].
pub fn gamp_from_gout<S: Scalar>(g: S, g_prime: f64, zhat: S, zbar: f64) -> (S, f64) {
    (zhat + g.scale(zbar), zbar + g_prime * zbar * zbar)
}

/// Conditional law of one entry given `d`, for the quadrature channel.
pub trait ZConditional: Send + Sync {
    /// `ln f₀^Z(Ẑ, Z̄, y, d)` up to a `d`-independent constant.
    fn ln_evidence(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> f64;
    /// Mean and variance of `z` given `d` and the row entry.
    fn z_posterior(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> (f64, f64);
    /// Location and scale of the `d` posterior, when cheaply known.
    fn locate(&self, _row: &ChannelRow<f64>) -> Option<(f64, f64)> {
        None
    }
}

/// `p(y|z,d) = |d| 𝒩(z; d·y, Δ)`.
#[derive(Clone, Copy, Debug)]
pub struct GainConditional {
    pub delta: f64,
}

impl ZConditional for GainConditional {
    fn ln_evidence(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> f64 {
        d.abs().ln() + ln_gauss_pdf_unchecked(d * y, zhat, self.delta + zbar)
    }

    fn z_posterior(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> (f64, f64) {
        let s = self.delta + zbar;
        ((self.delta * zhat + zbar * d * y) / s, self.delta * zbar / s)
    }

    fn locate(&self, row: &ChannelRow<f64>) -> Option<(f64, f64)> {
        let ch = GainChannel::new(self.delta, GainPrior::PointMass { d_cal: 1.0 });
        ch.evidence(row).map(|(m, v)| (m, v.sqrt()))
    }
}

/// `d = 1`: working sensor, `y = z`. `d = 0`: `y ~ 𝒩(m_f, σ_f)`.
#[derive(Clone, Copy, Debug)]
pub struct FaultyConditional {
    pub m_f: f64,
    pub sigma_f: f64,
}

impl ZConditional for FaultyConditional {
    fn ln_evidence(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> f64 {
        if d == 0.0 {
            ln_gauss_pdf_unchecked(y, self.m_f, self.sigma_f)
        } else {
            ln_gauss_pdf_unchecked(y, zhat, zbar)
        }
    }

    fn z_posterior(&self, zhat: f64, zbar: f64, y: f64, d: f64) -> (f64, f64) {
        if d == 0.0 {
            (zhat, zbar)
        } else {
            (y, 0.0)
        }
    }
}

/// Prior on `d` for the quadrature channel.
#[derive(Clone)]
pub enum DPrior {
    /// `(location, mass)` pairs.
    Atoms(Vec<(f64, f64)>),
    /// Density on a finite interval.
    Density { density: Arc<dyn Fn(f64) -> f64 + Send + Sync>, support: (f64, f64) },
}

impl std::fmt::Debug for DPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DPrior::Atoms(a) => f.debug_tuple("Atoms").field(a).finish(),
            DPrior::Density { support, .. } => f.debug_struct("Density").field("support", support).finish(),
        }
    }
}

impl DPrior {
    pub fn uniform(a: f64, b: f64) -> Self {
        let h = 1.0 / (b - a);
        DPrior::Density { density: Arc::new(move |_| h), support: (a, b) }
    }

    pub fn from_gain_prior(prior: &GainPrior) -> Result<Self> {
        match *prior {
            GainPrior::UniformReal { .. } => {
                let (a, b) = prior.solver_support().expect("uniform prior");
                Ok(DPrior::uniform(a, b))
            }
            GainPrior::PointMass { d_cal } => Ok(DPrior::Atoms(vec![(d_cal, 1.0)])),
            GainPrior::ComplexNormal { .. } => {
                Err(Error::Config("quadrature channel integrates over a real d only".into()))
            }
        }
    }
}

/// Real-field channel whose moments are integrals over `d` of a user
/// conditional:
/// `g_k ∝ ∫ p_D(d) ∏_m f₀^Z(Ẑ_m, Z̄_m, y_m, d) · E[zᵏ | d, row_l] dd`.
///
/// Densities are integrated by adaptive Gauss–Kronrod (relative tolerance
/// 1e-13) over `centre ± 40·scale` when the conditional can locate the
/// posterior, and over the whole support with 256 initial panels otherwise.
/// The product over `m` is accumulated in the log domain.
#[derive(Clone, Debug)]
pub struct QuadratureChannel<C> {
    pub conditional: C,
    pub prior: DPrior,
}

/// Posterior moments of `d` and of `z_l` under a quadrature channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureMoments {
    pub zhat: f64,
    pub zbar: f64,
    pub dhat: f64,
    pub dbar: f64,
}

impl<C: ZConditional> QuadratureChannel<C> {
    pub fn new(conditional: C, prior: DPrior) -> Self {
        QuadratureChannel { conditional, prior }
    }

    fn ln_weight(&self, row: &ChannelRow<f64>, d: f64) -> f64 {
        (0..row.len())
            .map(|m| self.conditional.ln_evidence(row.zhat[m], floor_variance(row.zbar[m]), row.y[m], d))
            .sum()
    }

    pub fn full_moments(&self, l: usize, row: &ChannelRow<f64>) -> Option<QuadratureMoments> {
        let (zh, zb, y) = (row.zhat[l], floor_variance(row.zbar[l]), row.y[l]);
        let cond = &self.conditional;
        match &self.prior {
            DPrior::Atoms(atoms) => {
                let lw: Vec<f64> =
                    atoms.iter().map(|&(d, mass)| mass.ln() + self.ln_weight(row, d)).collect();
                let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if !top.is_finite() {
                    return None;
                }
                let w: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
                let total: f64 = w.iter().sum();
                let mut acc = [0.0; 3];
                for (&(d, _), &wi) in atoms.iter().zip(&w) {
                    let (m, v) = cond.z_posterior(zh, zb, y, d);
                    let p = wi / total;
                    acc[0] += p * m;
                    acc[1] += p * d;
                    acc[2] += p * v;
                }
                let (mut zvar, mut dvar) = (acc[2], 0.0);
                for (&(d, _), &wi) in atoms.iter().zip(&w) {
                    let (m, _) = cond.z_posterior(zh, zb, y, d);
                    let p = wi / total;
                    zvar += p * (m - acc[0]) * (m - acc[0]);
                    dvar += p * (d - acc[1]) * (d - acc[1]);
                }
                Some(QuadratureMoments { zhat: acc[0], zbar: zvar, dhat: acc[1], dbar: dvar })
            }
            DPrior::Density { density, support } => {
                let (lo, hi, panels) = match cond.locate(row) {
                    Some((c, s)) if s > 0.0 && s.is_finite() => {
                        let lo = (c - 40.0 * s).max(support.0);
                        let hi = (c + 40.0 * s).min(support.1);
                        if hi > lo {
                            (lo, hi, 64)
                        } else {
                            (support.0, support.1, 256)
                        }
                    }
                    _ => (support.0, support.1, 256),
                };
                // Log-weight reference: the maximum over a coarse grid.
                let grid = 2000;
                let mut peak = f64::NEG_INFINITY;
                for k in 0..=grid {
                    let d = lo + (hi - lo) * k as f64 / grid as f64;
                    let v = density(d).ln() + self.ln_weight(row, d);
                    if v > peak {
                        peak = v;
                    }
                }
                if !peak.is_finite() {
                    return None;
                }
                let w = |d: f64| {
                    let dens = density(d);
                    if dens <= 0.0 {
                        0.0
                    } else {
                        (dens.ln() + self.ln_weight(row, d) - peak).exp()
                    }
                };
                let q = |f: &dyn Fn(f64) -> f64| integrate_adaptive(f, lo, hi, panels, 1e-13, 0.0).value;
                let w0 = q(&w);
                if !(w0 > 0.0) {
                    return None;
                }
                let zmean = |d: f64| cond.z_posterior(zh, zb, y, d).0;
                let dhat = q(&|d| d * w(d)) / w0;
                let zhat = q(&|d| zmean(d) * w(d)) / w0;
                let dbar = q(&|d| (d - dhat) * (d - dhat) * w(d)) / w0;
                let zbar = q(&|d| {
                    let (m, v) = cond.z_posterior(zh, zb, y, d);
                    (v + (m - zhat) * (m - zhat)) * w(d)
                }) / w0;
                Some(QuadratureMoments { zhat, zbar, dhat, dbar })
            }
        }
    }
}

impl<C: ZConditional> OutputChannel<f64> for QuadratureChannel<C> {
    fn moments(&self, _mu: usize, l: usize, row: &ChannelRow<f64>) -> Result<ChannelOutput<f64>> {
        match self.full_moments(l, row) {
            Some(m) => Ok(ChannelOutput {
                zhat: m.zhat,
                zbar: m.zbar,
                gain: Some(GainEstimate { mean: m.dhat, var: m.dbar, flag: GainFlag::Regular }),
                zero_evidence: false,
            }),
            None => Ok(ChannelOutput {
                zhat: row.zhat[l],
                zbar: floor_variance(row.zbar[l]),
                gain: None,
                zero_evidence: true,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn row<'a, S: Scalar>(z: &'a [S], zb: &'a [f64], y: &'a [S]) -> ChannelRow<'a, S> {
        ChannelRow::new(z, zb, y).unwrap()
    }

    #[test]
    fn calibrated_noiseless_pins_z() {
        let ch = CalibratedChannel { delta: 0.0, d_cal: vec![1.0f64] };
        let out = ch.moments(0, 0, &row(&[0.3], &[0.7], &[1.4])).unwrap();
        assert_eq!(out.zhat, 1.4);
        assert_eq!(out.zbar, 0.0);
    }

    #[test]
    fn faulty_degenerate_mixtures() {
        let r = row(&[0.3, -0.1], &[0.5, 0.2], &[1.1, 0.4]);
        let healthy = FaultyChannel { epsilon: 0.0, m_f: 0.0, sigma_f: 0.2 };
        let out = OutputChannel::<f64>::moments(&healthy, 0, 0, &r).unwrap();
        assert_eq!((out.zhat, out.zbar), (1.1, 0.0));
        let broken = FaultyChannel { epsilon: 1.0, m_f: 0.0, sigma_f: 0.2 };
        let out = OutputChannel::<f64>::moments(&broken, 0, 0, &r).unwrap();
        assert_eq!((out.zhat, out.zbar), (0.3, 0.5));
    }

    #[test]
    fn faulty_survives_long_rows() {
        let p = 400;
        let z = vec![0.0; p];
        let zb = vec![1e-3; p];
        let y = vec![3.0; p];
        let ch = FaultyChannel { epsilon: 0.2, m_f: 0.0, sigma_f: 0.2 };
        let out = OutputChannel::<f64>::moments(&ch, 0, 0, &row(&z, &zb, &y)).unwrap();
        assert!(out.zhat.is_finite() && out.zbar.is_finite());
        assert_eq!(out.zhat, 0.0);
    }

    #[test]
    fn gain_limits() {
        let z = [0.4, -0.2, 0.9];
        let zb = [0.3, 0.2, 0.5];
        let y = [1.2, -0.3, 0.8];
        let known = GainChannel::new(1e-15, GainPrior::PointMass { d_cal: 1.3 });
        let out = known.moments(0, 0, &row(&z, &zb, &y)).unwrap();
        assert_relative_eq!(out.zhat, 1.3 * 1.2, max_relative = 1e-12);
        let noisy = GainChannel::new(1e12, GainPrior::uniform(1.0));
        let out = noisy.moments(0, 0, &row(&z, &zb, &y)).unwrap();
        assert_relative_eq!(out.zhat, 0.4, max_relative = 1e-9);
        assert_relative_eq!(out.zbar, 0.3, max_relative = 1e-9);
    }

    #[test]
    fn gain_zero_rows_fall_back_to_prior() {
        let ch = GainChannel::new(1e-15, GainPrior::uniform(1.0));
        let out = ch.moments(0, 0, &row(&[0.4, 0.1], &[0.3, 0.3], &[0.0, 0.0])).unwrap();
        assert!(out.zero_evidence);
        let g = out.gain.unwrap();
        assert_eq!(g.flag, GainFlag::ZeroEvidence);
        assert_eq!(g.mean, 1.0);
    }

    #[test]
    fn point_mass_gain_equals_calibrated() {
        let z = [0.4, -0.2];
        let zb = [0.3, 0.2];
        let y = [1.2, -0.3];
        let gain = GainChannel::new(0.01, GainPrior::PointMass { d_cal: 0.9 });
        let cal = CalibratedChannel { delta: 0.01, d_cal: vec![0.9] };
        for l in 0..2 {
            let a = gain.moments(0, l, &row(&z, &zb, &y)).unwrap();
            let b = cal.moments(0, l, &row(&z, &zb, &y)).unwrap();
            assert_relative_eq!(a.zhat, b.zhat, max_relative = 1e-14);
            assert_relative_eq!(a.zbar, b.zbar, max_relative = 1e-14);
        }
    }

    #[test]
    fn gout_examples() {
        assert_eq!(gamp_gout(0.5f64, 0.5, 0.2, 0.2), (0.0, 0.0));
        let (g, gp) = gamp_gout(1.4f64, 0.3, 0.0, 0.7);
        assert_relative_eq!(g, (1.4 - 0.3) / 0.7);
        assert_relative_eq!(gp, -1.0 / 0.7);
    }

    #[test]
    fn complex_point_mass_rotates_with_data() {
        let phi = Complex64::from_polar(1.0, 0.8);
        let z = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5)];
        let zb = [0.3, 0.4];
        let y = [Complex64::new(1.0, -0.4), Complex64::new(0.2, 0.7)];
        let ch = GainChannel::new(0.05, GainPrior::ComplexNormal { complex_gain_variance: 10.0 });
        let (dh, db) = ch.evidence(&row(&z, &zb, &y)).unwrap();
        let yr = [y[0] * phi, y[1] * phi];
        let (dh2, db2) = ch.evidence(&row(&z, &zb, &yr)).unwrap();
        assert_relative_eq!(db, db2, max_relative = 1e-14);
        let expect = dh * phi.conj();
        assert_relative_eq!(dh2.re, expect.re, max_relative = 1e-13);
        assert_relative_eq!(dh2.im, expect.im, max_relative = 1e-13);
    }

    #[test]
    fn channel_kind_serde_and_validation() {
        let k: ChannelKind = serde_json::from_str(
            r#"{"variant":"real-gain","delta":1e-15,"gain_prior":{"variant":"uniform-real","w_d":1.0}}"#,
        )
        .unwrap();
        assert!(k.is_gain());
        assert_eq!(k.default_damping(), 0.8);
        let f: ChannelKind = serde_json::from_str(r#"{"variant":"faulty","epsilon":0.2}"#).unwrap();
        assert_eq!(f, ChannelKind::Faulty { epsilon: 0.2, m_f: 0.0, sigma_f: None });
        assert!(ChannelKind::Faulty { epsilon: 1.5, m_f: 0.0, sigma_f: None }.validate().is_err());
        assert!(f.build::<Complex64>(&[], 0.2).is_err());
        assert!(f.build::<f64>(&[], 0.2).is_ok());
    }

    #[test]
    fn row_shape_is_checked() {
        assert!(ChannelRow::new(&[1.0f64], &[1.0, 2.0], &[1.0]).is_err());
        assert!(ChannelRow::<f64>::new(&[], &[], &[]).is_err());
    }
}
