//! Seeded synthetic instances and their binary dump format.
//!
//! Dump layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  b"CALAMPI\0"
//! version  u32      1
//! hlen     u32      length of the JSON header in bytes
//! header   hlen bytes of UTF-8 JSON (InstanceParams)
//! F        M·N values
//! x_true   N·P values
//! d_true   M values
//! y        M·P values
//! ```
//!
//! Matrices are row-major. Each value is one `f64`, or two (re, im) on the
//! complex field.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelKind;
use crate::error::{Error, Result};
use crate::priors::SignalPrior;
use crate::scalar::{Field, Scalar};

pub const MAGIC: &[u8; 8] = b"CALAMPI\0";
pub const FORMAT_VERSION: u32 = 1;

/// Independent RNG streams for each generated component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Matrix = 0,
    Signal = 1,
    Gains = 2,
    Noise = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Number of sensors for `α·N`, at least one.
pub fn sensors_for(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub alpha: f64,
    pub prior: SignalPrior,
    pub channel: ChannelKind,
    pub field: Field,
    pub seed: u64,
}

impl InstanceParams {
    pub fn new(n: usize, alpha: f64, p: usize, prior: SignalPrior, channel: ChannelKind, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::Config(format!("n and p must be positive, got n={n}, p={p}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        prior.validate()?;
        channel.validate()?;
        let field = prior.field();
        if let Some(cf) = channel.field() {
            if cf != field {
                return Err(Error::Config(format!("channel field {cf:?} differs from prior field {field:?}")));
            }
        }
        let m = sensors_for(n, alpha);
        Ok(InstanceParams { n, m, p, alpha: m as f64 / n as f64, prior, channel, field, seed })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemInstance<S> {
    pub f: Array2<S>,
    pub x_true: Array2<S>,
    pub d_true: Array1<S>,
    pub y: Array2<S>,
    pub params: InstanceParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation<S> {
    pub y: Array2<S>,
    pub d_true: Array1<S>,
    pub z: Array2<S>,
}

/// iid `𝒩(0, 1/N)` or `𝒞𝒩(0, 1/N)` entries.
pub fn gen_matrix<S: Scalar, R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Array2<S> {
    let sd = (1.0 / n as f64).sqrt();
    let mut f = Array2::zeros((m, n));
    f.iter_mut().for_each(|v| *v = S::sample_standard(rng).scale(sd));
    f
}

pub fn gen_signal<S: Scalar, R: Rng + ?Sized>(n: usize, p: usize, prior: &SignalPrior, rng: &mut R) -> Array2<S> {
    let mut x = Array2::zeros((n, p));
    x.iter_mut().for_each(|v| *v = prior.sample(rng));
    x
}

/// Applies the channel to `z = F·x`. Sensor states and gains come from
/// `gains`, additive and replacement noise from `noise`.
/// `signal_variance` resolves a faulty channel's default `σ_f`.
pub fn gen_observation<S: Scalar, R: Rng + ?Sized>(
    f: &Array2<S>,
    x_true: &Array2<S>,
    channel: &ChannelKind,
    signal_variance: f64,
    gains: &mut R,
    noise: &mut R,
) -> Result<Observation<S>> {
    if f.ncols() != x_true.nrows() {
        return Err(Error::Shape(format!("F is {:?} but x is {:?}", f.dim(), x_true.dim())));
    }
    channel.validate()?;
    let z = f.dot(x_true);
    let (m, p) = z.dim();
    let mut y = Array2::zeros((m, p));
    let mut d_true = Array1::zeros(m);
    match *channel {
        ChannelKind::Faulty { epsilon, m_f, sigma_f } => {
            let sf = sigma_f.unwrap_or(signal_variance).sqrt();
            for mu in 0..m {
                let faulty = gains.random::<f64>() < epsilon;
                d_true[mu] = if faulty { S::zero() } else { S::one() };
                for l in 0..p {
                    y[[mu, l]] = if faulty { S::from_re(m_f) + S::sample_standard(noise).scale(sf) } else { z[[mu, l]] };
                }
            }
        }
        ChannelKind::RealGain { delta, gain_prior } | ChannelKind::ComplexGain { delta, gain_prior } => {
            let sd = delta.sqrt();
            for mu in 0..m {
                let d: S = gain_prior.sample(gains);
                d_true[mu] = d;
                for l in 0..p {
                    y[[mu, l]] = (z[[mu, l]] + S::sample_standard(noise).scale(sd)) / d;
                }
            }
        }
        ChannelKind::Calibrated { delta } => {
            let sd = delta.sqrt();
            for mu in 0..m {
                d_true[mu] = S::one();
                for l in 0..p {
                    y[[mu, l]] = z[[mu, l]] + S::sample_standard(noise).scale(sd);
                }
            }
        }
    }
    Ok(Observation { y, d_true, z })
}

/// Draws a full instance. Each component has its own stream so that, for
/// example, changing the channel leaves `F` and `x` unchanged.
pub fn generate<S: Scalar>(params: &InstanceParams) -> Result<ProblemInstance<S>> {
    if params.field != S::FIELD {
        return Err(Error::Config(format!("instance field {:?} requested as {:?}", params.field, S::FIELD)));
    }
    let f = gen_matrix(params.m, params.n, &mut stream_rng(params.seed, Stream::Matrix));
    let x_true = gen_signal(params.n, params.p, &params.prior, &mut stream_rng(params.seed, Stream::Signal));
    let obs = gen_observation(
        &f,
        &x_true,
        &params.channel,
        params.prior.variance(),
        &mut stream_rng(params.seed, Stream::Gains),
        &mut stream_rng(params.seed, Stream::Noise),
    )?;
    Ok(ProblemInstance { f, x_true, d_true: obs.d_true, y: obs.y, params: params.clone() })
}

impl<S: Scalar> ProblemInstance<S> {
    pub fn m(&self) -> usize {
        self.f.nrows()
    }

    pub fn n(&self) -> usize {
        self.f.ncols()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.params)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(8 * (self.f.len() + self.x_true.len() + self.d_true.len() + self.y.len()) * 2);
        for v in self.f.iter().chain(self.x_true.iter()).chain(self.d_true.iter()).chain(self.y.iter()) {
            buf.extend_from_slice(&v.re().to_le_bytes());
            if S::is_complex() {
                buf.extend_from_slice(&v.im().to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// An instance of either field.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyInstance {
    Real(ProblemInstance<f64>),
    Complex(ProblemInstance<num_complex::Complex64>),
}

fn read_header<R: Read>(r: &mut R) -> Result<InstanceParams> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header)?;
    Ok(serde_json::from_slice(&header)?)
}

fn read_array<S: Scalar, R: Read>(r: &mut R, len: usize) -> Result<Vec<S>> {
    let width = if S::is_complex() { 16 } else { 8 };
    let mut bytes = vec![0u8; len * width];
    r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated array data: {e}")))?;
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    Ok(bytes.chunks_exact(width).map(|c| S::from_parts(f(&c[..8]), if width == 16 { f(&c[8..]) } else { 0.0 })).collect())
}

fn read_body<S: Scalar, R: Read>(r: &mut R, params: InstanceParams) -> Result<ProblemInstance<S>> {
    let (m, n, p) = (params.m, params.n, params.p);
    let shape = |e: ndarray::ShapeError| Error::Format(e.to_string());
    let f = Array2::from_shape_vec((m, n), read_array(r, m * n)?).map_err(shape)?;
    let x_true = Array2::from_shape_vec((n, p), read_array(r, n * p)?).map_err(shape)?;
    let d_true = Array1::from(read_array(r, m)?);
    let y = Array2::from_shape_vec((m, p), read_array(r, m * p)?).map_err(shape)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after arrays".into()));
    }
    Ok(ProblemInstance { f, x_true, d_true, y, params })
}

pub fn read_any<R: Read>(r: &mut R) -> Result<AnyInstance> {
    let params = read_header(r)?;
    Ok(match params.field {
        Field::Real => AnyInstance::Real(read_body(r, params)?),
        Field::Complex => AnyInstance::Complex(read_body(r, params)?),
    })
}

pub fn load_any(path: &Path) -> Result<AnyInstance> {
    read_any(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
