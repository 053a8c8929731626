//! Simulated homodyne measurements: ideal quadrature draws `(X, Phi)`,
//! the efficiency-`eta` detector noise, and the resulting noisy density.

use std::f64::consts::{E, PI, SQRT_2};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::OnceLock;

use gauss_quad::hermite::GaussHermite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::states::{check_phase, StateModel};

/// Records generated from one RNG stream.
pub const BLOCK_LEN: usize = 1024;

/// Consecutive rejections after which a sampler is considered broken.
pub const MAX_REJECTIONS: u64 = 1_000_000;

const GAUSS_HERMITE_NODES: usize = 200;

/// Detector efficiency `eta` in `(1/2, 1]` and the derived
/// `gamma = (1 - eta) / (4 eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoise", into = "RawNoise")]
pub struct NoiseConfig {
    eta: f64,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNoise {
    eta: f64,
}

impl TryFrom<RawNoise> for NoiseConfig {
    type Error = Error;
    fn try_from(r: RawNoise) -> Result<Self> {
        NoiseConfig::new(r.eta)
    }
}

impl From<NoiseConfig> for RawNoise {
    fn from(c: NoiseConfig) -> Self {
        RawNoise { eta: c.eta }
    }
}

impl NoiseConfig {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.5 && eta <= 1.0) {
            return Err(Error::param(
                "eta",
                format!("detection efficiency must lie in (1/2, 1], got {eta}"),
            ));
        }
        Ok(Self {
            eta,
            gamma: (1.0 - eta) / (4.0 * eta),
        })
    }

    pub fn ideal() -> Self {
        Self { eta: 1.0, gamma: 0.0 }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// One noisy observation `(Y, Phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub y: f64,
    pub phi: f64,
}

/// Rejection constant for the single-photon density against `N(0, 1)`:
/// `sup_x 2 sqrt(2) x^2 exp(-x^2/2) = 4 sqrt(2) / e`.
pub fn single_photon_envelope() -> f64 {
    4.0 * SQRT_2 / E
}

/// Rejection constant for the cat density against the two-bump mixture.
pub fn cat_envelope(q0: f64) -> f64 {
    2.0 / (1.0 + (-q0 * q0).exp())
}

fn gaussian<R: Rng>(rng: &mut R, mean: f64, var: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

fn draw_quadrature<R: Rng>(state: &StateModel, phi: f64, rng: &mut R) -> Result<f64> {
    match *state {
        StateModel::Vacuum => Ok(gaussian(rng, 0.0, 0.5)),
        StateModel::Coherent { q0 } => Ok(gaussian(rng, q0 * phi.cos(), 0.5)),
        StateModel::Thermal { beta } => Ok(gaussian(rng, 0.0, 0.5 / (0.5 * beta).tanh())),
        StateModel::SinglePhoton => {
            let m = single_photon_envelope();
            reject(state, rng, |rng| {
                let x = gaussian(rng, 0.0, 1.0);
                let proposal = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                (x, proposal * m)
            }, phi)
        }
        StateModel::SchroedingerCat { q0 } => {
            let a = q0 * phi.cos();
            let m = cat_envelope(q0);
            reject(state, rng, |rng| {
                let centre = if rng.random::<bool>() { a } else { -a };
                let x = gaussian(rng, centre, 0.5);
                let proposal =
                    ((-(x - a).powi(2)).exp() + (-(x + a).powi(2)).exp()) / (2.0 * PI.sqrt());
                (x, proposal * m)
            }, phi)
        }
    }
}

fn reject<R: Rng>(
    state: &StateModel,
    rng: &mut R,
    mut propose: impl FnMut(&mut R) -> (f64, f64),
    phi: f64,
) -> Result<f64> {
    for _ in 0..MAX_REJECTIONS {
        let (x, bound) = propose(rng);
        let u: f64 = rng.random();
        if u * bound <= state.density_unchecked(x, phi) {
            return Ok(x);
        }
    }
    Err(Error::RejectionStalled {
        state: state.label(),
        rejections: MAX_REJECTIONS,
    })
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ideal_block(state: &StateModel, seed: u64, block: usize, len: usize) -> Result<Vec<(f64, f64)>> {
    let mut rng = block_rng(seed, 2 * block as u64);
    (0..len)
        .map(|_| {
            let phi = rng.random::<f64>() * PI;
            draw_quadrature(state, phi, &mut rng).map(|x| (x, phi))
        })
        .collect()
}

fn blocks(n: usize) -> impl IndexedParallelIterator<Item = (usize, usize)> {
    let count = n.div_ceil(BLOCK_LEN);
    (0..count)
        .into_par_iter()
        .map(move |b| (b, BLOCK_LEN.min(n - b * BLOCK_LEN)))
}

/// `n` ideal draws `(x, phi)`: `phi` uniform on `[0, pi]`, `x ~ p_rho(.|phi)`.
/// Deterministic in `seed` regardless of thread count.
pub fn sample_ideal(state: &StateModel, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::param("n", "sample count must be >= 1"));
    }
    state.validate()?;
    let parts: Vec<Vec<(f64, f64)>> = blocks(n)
        .map(|(b, len)| ideal_block(state, seed, b, len))
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// `sqrt(eta) x + sqrt((1 - eta)/2) xi` with `xi ~ N(0, 1)`.
pub fn add_noise<R: Rng + ?Sized>(x: f64, cfg: &NoiseConfig, rng: &mut R) -> f64 {
    let xi: f64 = rng.sample(StandardNormal);
    cfg.eta.sqrt() * x + (0.5 * (1.0 - cfg.eta)).sqrt() * xi
}

/// Full measurement simulation: ideal draws (same as [`sample_ideal`] for
/// the same seed) corrupted by detector noise from an independent stream.
pub fn simulate(
    state: &StateModel,
    noise: &NoiseConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    if n == 0 {
        return Err(Error::param("n", "sample count must be >= 1"));
    }
    state.validate()?;
    let parts: Vec<Vec<MeasurementRecord>> = blocks(n)
        .map(|(b, len)| {
            let ideal = ideal_block(state, seed, b, len)?;
            let mut rng = block_rng(seed, 2 * b as u64 + 1);
            Ok(ideal
                .into_iter()
                .map(|(x, phi)| MeasurementRecord {
                    y: add_noise(x, noise, &mut rng),
                    phi,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

fn hermite_rule() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(NonZeroUsize::new(GAUSS_HERMITE_NODES).unwrap()))
}

/// Density `p^eta_rho(y | phi)` of the noisy quadrature: the law of
/// `sqrt(eta) X` convolved with `N(0, (1 - eta)/2)`, by 200-node
/// Gauss-Hermite quadrature over the noise variable.
pub fn noisy_density(state: &StateModel, y: f64, phi: f64, cfg: &NoiseConfig) -> Result<f64> {
    check_phase(phi)?;
    let eta = cfg.eta;
    if eta == 1.0 {
        return Ok(state.density_unchecked(y, phi));
    }
    let spread = (1.0 - eta).sqrt();
    let root_eta = eta.sqrt();
    let integral = hermite_rule()
        .integrate(|u| state.density_unchecked((y - spread * u) / root_eta, phi) / root_eta);
    Ok(integral / PI.sqrt())
}

pub fn write_records<W: Write>(records: &[MeasurementRecord], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    let wrap = |e| Error::io("<samples>", e);
    writeln!(w, "y,phi").map_err(wrap)?;
    for r in records {
        writeln!(w, "{:.16e},{:.16e}", r.y, r.phi).map_err(wrap)?;
    }
    w.flush().map_err(wrap)
}

pub fn save_records(records: &[MeasurementRecord], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(records, f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parse a `y,phi` sample file. Errors carry the 1-based line number.
pub fn read_records<R: Read>(r: R, origin: &Path) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.len() != 2 || &headers[0] != "y" || &headers[1] != "phi" {
        return Err(parse_err(1, format!("expected header `y,phi`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = row
                .get(i)
                .ok_or_else(|| parse_err(line, format!("missing `{name}`")))?
                .parse()
                .map_err(|_| parse_err(line, format!("`{name}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("`{name}` is not finite")))
            }
        };
        let y = field(0, "y")?;
        let phi = field(1, "phi")?;
        if !(0.0..=PI).contains(&phi) {
            return Err(parse_err(line, format!("phase {phi} outside [0, pi]")));
        }
        out.push(MeasurementRecord { y, phi });
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(f, path)
}
