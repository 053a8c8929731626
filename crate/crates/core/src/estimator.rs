//! Two-stage density-matrix estimator: the empirical pattern-function
//! projection `rho_hat`, followed by coordinatewise complex soft
//! thresholding at data-driven levels `t_{j,k}`.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DensityMatrix;
use crate::measurement::{MeasurementRecord, NoiseConfig};
use crate::patterns::{pair_count, GridSpec, PatternTable};

/// Records summed sequentially before the deterministic tree reduction.
pub const REDUCTION_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub r0: f64,
    #[serde(rename = "B0")]
    pub b0: f64,
    #[serde(rename = "N_override")]
    pub n_override: Option<usize>,
    pub kappa: f64,
    pub grid: GridSpec,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            eta: 0.9,
            epsilon: 1.0,
            r0: 2.0,
            b0: 0.5,
            n_override: None,
            kappa: 1.0,
            grid: GridSpec::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<NoiseConfig> {
        let noise = NoiseConfig::new(self.eta)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::param("epsilon", format!("must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.r0 > 0.0 && self.r0 <= 2.0) {
            return Err(Error::param("r0", format!("must lie in (0, 2], got {}", self.r0)));
        }
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::param("B0", format!("must be > 0, got {}", self.b0)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        if self.n_override == Some(0) {
            return Err(Error::param("N", "must be >= 1"));
        }
        Ok(noise)
    }

    /// `N` for `n` samples: the override if set, else [`choose_n`].
    pub fn n_for(&self, n_samples: usize) -> Result<usize> {
        match self.n_override {
            Some(n) => Ok(n),
            None => choose_n(n_samples, self.r0, self.b0),
        }
    }
}

/// `floor((ln n / (2 B0))^(2 / r0))`, at least 1.
pub fn choose_n(n: usize, r0: f64, b0: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::SampleCountTooSmall(n));
    }
    let v = ((n as f64).ln() / (2.0 * b0)).powf(2.0 / r0).floor();
    Ok((v as usize).max(1))
}

/// The index set `J(N) = {(j, k) : j + k <= N - 1}`.
pub fn index_set(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|j| (0..n - j).map(move |k| (j, k)))
        .collect()
}

/// Per-entry thresholds `t_{j,k}` on `J(N)`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    n: usize,
    values: Vec<f64>,
}

impl Thresholds {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for (j, k) in index_set(n) {
            values[j * n + k] = f(j, k);
        }
        Self { n, values }
    }

    pub fn index_n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        if j + k < self.n {
            self.values[j * self.n + k]
        } else {
            0.0
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|t| t * factor).collect(),
        }
    }
}

impl Serialize for Thresholds {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<(usize, usize, f64)> =
            index_set(self.n).into_iter().map(|(j, k)| (j, k, self.get(j, k))).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Thresholds {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<(usize, usize, f64)> = Vec::deserialize(d)?;
        let n = rows.iter().map(|r| r.0 + r.1 + 1).max().unwrap_or(0);
        let lookup: HashMap<(usize, usize), f64> = rows.into_iter().map(|(j, k, t)| ((j, k), t)).collect();
        Ok(Thresholds::from_fn(n, |j, k| lookup.get(&(j, k)).copied().unwrap_or(0.0)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationResult {
    pub config: EstimatorConfig,
    #[serde(rename = "N_used")]
    pub n_used: usize,
    pub n_samples: usize,
    pub thresholds: Thresholds,
    pub raw: DensityMatrix,
    pub thresholded: DensityMatrix,
}

impl EstimationResult {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

fn tree_sum(mut parts: Vec<Vec<Complex64>>) -> Vec<Complex64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// `rho_hat_{j,k} = (1/n) sum_l G_{j,k}(Y_l / sqrt(eta), Phi_l)` on `J(N)`,
/// zero elsewhere. `data_eta` is the efficiency the records were taken at.
///
/// Records are summed in fixed blocks that are combined by a pairwise tree,
/// so the result is bitwise identical for any thread count.
pub fn raw_estimate(
    records: &[MeasurementRecord],
    table: &PatternTable,
    n_index: usize,
    data_eta: f64,
) -> Result<DensityMatrix> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if table.eta() != data_eta {
        return Err(Error::EtaMismatch {
            table: table.eta(),
            data: data_eta,
        });
    }
    if n_index == 0 || n_index > table.max_index() {
        return Err(Error::param(
            "N",
            format!("{n_index} not covered by table with N = {}", table.max_index()),
        ));
    }
    let count = pair_count(n_index);
    let pairs = &table.pairs()[..count];
    let orders: Vec<usize> = pairs.iter().map(|&(j, k)| j - k).collect();
    let inv_root_eta = 1.0 / data_eta.sqrt();

    let partial: Vec<Vec<Complex64>> = records
        .par_chunks(REDUCTION_BLOCK)
        .map(|chunk| {
            let mut sums = vec![Complex64::new(0.0, 0.0); count];
            let mut f = vec![0.0; count];
            let mut phase = vec![Complex64::new(1.0, 0.0); n_index];
            for r in chunk {
                if !table.eval_prefix(r.y * inv_root_eta, count, &mut f) {
                    continue;
                }
                let step = Complex64::from_polar(1.0, -r.phi);
                for d in 1..n_index {
                    phase[d] = phase[d - 1] * step;
                }
                for p in 0..count {
                    sums[p] += phase[orders[p]] * f[p];
                }
            }
            sums
        })
        .collect();
    let sums = tree_sum(partial);

    let inv_n = 1.0 / records.len() as f64;
    let mut m = DensityMatrix::zeros(n_index)?;
    for (&(j, k), s) in pairs.iter().zip(&sums) {
        let v = s * inv_n;
        m.set(j, k, v);
        m.set(k, j, v.conj());
    }
    Ok(m)
}

/// `kappa * 2 ||f||_inf sqrt(ln(2N(N+1)/epsilon) / n)`.
pub fn threshold_value(sup_norm: f64, n_index: usize, n: usize, epsilon: f64, kappa: f64) -> f64 {
    let nf = n_index as f64;
    kappa * 2.0 * sup_norm * ((2.0 * nf * (nf + 1.0) / epsilon).ln() / n as f64).sqrt()
}

pub fn thresholds(
    table: &PatternTable,
    n_index: usize,
    n: usize,
    epsilon: f64,
    kappa: f64,
) -> Result<Thresholds> {
    if n == 0 {
        return Err(Error::param("n", "must be >= 1"));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    if n_index > table.max_index() {
        return Err(Error::param("N", format!("{n_index} exceeds table N = {}", table.max_index())));
    }
    let mut err = None;
    let t = Thresholds::from_fn(n_index, |j, k| match table.sup_norm(j, k) {
        Ok(s) => threshold_value(s, n_index, n, epsilon, kappa),
        Err(e) => {
            err = Some(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(t),
    }
}

/// Complex soft threshold `z/|z| (|z| - t)_+` with `0/0 = 0`.
pub fn shrink(z: Complex64, t: f64) -> Complex64 {
    let r = z.norm();
    if r <= t {
        Complex64::new(0.0, 0.0)
    } else {
        z * ((r - t) / r)
    }
}

pub fn soft_threshold(raw: &DensityMatrix, t: &Thresholds) -> Result<DensityMatrix> {
    if raw.dim() < t.index_n() {
        return Err(Error::ShapeMismatch(format!(
            "matrix dim {} smaller than threshold N {}",
            raw.dim(),
            t.index_n()
        )));
    }
    DensityMatrix::from_fn(raw.dim(), |j, k| shrink(raw.get(j, k), t.get(j, k)))
}

/// Projection of `nu` onto `{nu : |nu_{j,k} - rho_hat_{j,k}| <= t_{j,k}}`,
/// which only moves coordinate `(j, k)`.
pub fn project_coordinate(
    nu: &mut DensityMatrix,
    raw: &DensityMatrix,
    t: &Thresholds,
    j: usize,
    k: usize,
) {
    let centre = raw.get(j, k);
    let radius = t.get(j, k);
    let offset = nu.get(j, k) - centre;
    let r = offset.norm();
    if r > radius {
        nu.set(j, k, centre + offset * (radius / r));
    }
}

/// Minimum over `I subset J(N)` of `4 sum_I t^2 + sum_{not I} |rho|^2`,
/// attained coordinatewise. Entries of `rho_true` outside `J(N)` always
/// count towards the second sum.
pub fn oracle_bound(rho_true: &DensityMatrix, t: &Thresholds, n_index: usize) -> f64 {
    let d = rho_true.dim().max(n_index);
    let mut total = 0.0;
    for j in 0..d {
        for k in 0..d {
            let mass = rho_true.get(j, k).norm_sqr();
            total += if j + k < n_index {
                mass.min(4.0 * t.get(j, k).powi(2))
            } else {
                mass
            };
        }
    }
    total
}

/// Estimation pipeline with a cache of pattern tables keyed by `N`.
#[derive(Debug)]
pub struct Estimator {
    cfg: EstimatorConfig,
    noise: NoiseConfig,
    tables: Mutex<HashMap<usize, Arc<PatternTable>>>,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Result<Self> {
        let noise = cfg.validate()?;
        Ok(Self {
            cfg,
            noise,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn table(&self, n_index: usize) -> Result<Arc<PatternTable>> {
        if let Some(t) = self.tables.lock().unwrap().get(&n_index) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(PatternTable::build(n_index, &self.noise, &self.cfg.grid)?);
        self.tables
            .lock()
            .unwrap()
            .entry(n_index)
            .or_insert_with(|| Arc::clone(&table));
        Ok(table)
    }

    /// `N` and the raw estimate.
    pub fn raw(&self, records: &[MeasurementRecord]) -> Result<(usize, DensityMatrix, Arc<PatternTable>)> {
        if records.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let n_index = self.cfg.n_for(records.len())?;
        let table = self.table(n_index)?;
        let raw = raw_estimate(records, &table, n_index, self.noise.eta())?;
        Ok((n_index, raw, table))
    }

    pub fn estimate(&self, records: &[MeasurementRecord]) -> Result<EstimationResult> {
        let (n_index, raw, table) = self.raw(records)?;
        let t = thresholds(&table, n_index, records.len(), self.cfg.epsilon, self.cfg.kappa)?;
        let thresholded = soft_threshold(&raw, &t)?;
        Ok(EstimationResult {
            config: self.cfg,
            n_used: n_index,
            n_samples: records.len(),
            thresholds: t,
            raw,
            thresholded,
        })
    }
}

/// One-shot estimation; builds the pattern table for the chosen `N`.
pub fn estimate(records: &[MeasurementRecord], cfg: &EstimatorConfig) -> Result<EstimationResult> {
    Estimator::new(*cfg)?.estimate(records)
}
