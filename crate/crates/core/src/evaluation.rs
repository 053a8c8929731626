//! Monte Carlo evaluation: relative RMSE studies over a grid of sample
//! sizes, threshold-scale sweeps with common random numbers, deviation
//! coverage, power-law fits and the coefficient tail bound.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{index_set, oracle_bound, soft_threshold, thresholds, Estimator, EstimatorConfig};
use crate::matrix::DensityMatrix;
use crate::measurement::simulate;
use crate::states::{class_envelope_check, density_matrix, ClassParams, StateModel};

/// Reference matrices are never truncated below this dimension.
pub const TRUTH_MIN_DIM: usize = 40;

/// `||est - truth||_2 / ||truth||_2` over the union of both supports.
pub fn relative_rmse(est: &DensityMatrix, truth: &DensityMatrix) -> Result<f64> {
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok(est.distance_sqr(truth).sqrt() / norm)
}

/// Truncated reference matrix and the squared mass it leaves out.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub matrix: DensityMatrix,
    pub tail_mass: f64,
}

pub fn ground_truth(state: &StateModel, n_index: usize) -> Result<GroundTruth> {
    let dim = n_index.max(TRUTH_MIN_DIM);
    let matrix = density_matrix(state, dim)?;
    let limit = (4 * dim).max(dim + 200);
    let full: f64 = (0..limit)
        .flat_map(|j| (0..limit).map(move |k| (j, k)))
        .map(|(j, k)| state.coefficient(j, k).powi(2))
        .sum();
    Ok(GroundTruth {
        tail_mass: (full - matrix.norm_sqr()).max(0.0),
        matrix,
    })
}

/// Seed for replication `rep` at sample size `n`; independent of the
/// order in which replications are run.
pub fn replication_seed(master: u64, n: usize, rep: usize) -> u64 {
    let mut z = master
        ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmseStudy {
    pub state: StateModel,
    pub cfg: EstimatorConfig,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    /// `rmse[rep][i]` for sample size `n_grid[i]`.
    pub rmse: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `N` used at each sample size.
    pub n_used: Vec<usize>,
    /// `||rho||_2` of the reference matrix at each sample size.
    pub truth_norm: Vec<f64>,
    /// Mass of the true matrix beyond the reference truncation.
    pub tail_mass: Vec<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

impl RmseStudy {
    fn finish(mut self) -> Self {
        let cols = self.n_grid.len();
        self.mean.clear();
        self.std.clear();
        for i in 0..cols {
            let col: Vec<f64> = self.rmse.iter().map(|row| row[i]).collect();
            let (m, s) = mean_std(&col);
            self.mean.push(m);
            self.std.push(s);
        }
        self
    }

    pub fn kappa(&self) -> f64 {
        self.cfg.kappa
    }

    /// Mean of `||rho_tilde - rho||_2^2` at each sample size.
    pub fn mean_sq_error(&self) -> Vec<f64> {
        (0..self.n_grid.len())
            .map(|i| {
                let norm2 = self.truth_norm[i].powi(2);
                self.rmse.iter().map(|row| row[i].powi(2) * norm2).sum::<f64>() / self.reps as f64
            })
            .collect()
    }

    /// Rows `n,rep,rmse,kappa`.
    pub fn write_csv<W: Write>(&self, w: W, header: bool) -> Result<()> {
        let mut w = BufWriter::new(w);
        let wrap = |e| Error::io("<study>", e);
        if header {
            writeln!(w, "n,rep,rmse,kappa").map_err(wrap)?;
        }
        for (i, &n) in self.n_grid.iter().enumerate() {
            for (rep, row) in self.rmse.iter().enumerate() {
                writeln!(w, "{n},{rep},{:.16e},{}", row[i], self.kappa()).map_err(wrap)?;
            }
        }
        w.flush().map_err(wrap)
    }

    /// Rows `n,mean,std,lo3,hi3,kappa`.
    pub fn write_summary_csv<W: Write>(&self, w: W, header: bool) -> Result<()> {
        let mut w = BufWriter::new(w);
        let wrap = |e| Error::io("<summary>", e);
        if header {
            writeln!(w, "n,mean,std,lo3,hi3,kappa").map_err(wrap)?;
        }
        for (i, &n) in self.n_grid.iter().enumerate() {
            let (m, s) = (self.mean[i], self.std[i]);
            writeln!(
                w,
                "{n},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                m,
                s,
                m - 3.0 * s,
                m + 3.0 * s,
                self.kappa()
            )
            .map_err(wrap)?;
        }
        w.flush().map_err(wrap)
    }
}

/// Per-`(n, kappa)` summary rows read back from a study CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    /// `kappa -> n -> rmse values`
    pub groups: BTreeMap<String, BTreeMap<usize, Vec<f64>>>,
}

impl StudyTable {
    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let err = |line: u64, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let expected = ["n", "rep", "rmse", "kappa"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(err(1, "expected header `n,rep,rmse,kappa`".into()));
        }
        let mut groups: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let n: usize = row[0].parse().map_err(|_| err(line, "bad `n`".into()))?;
            let rmse: f64 = row[2].parse().map_err(|_| err(line, "bad `rmse`".into()))?;
            let kappa: f64 = row[3].parse().map_err(|_| err(line, "bad `kappa`".into()))?;
            if !(rmse.is_finite() && rmse >= 0.0) {
                return Err(err(line, "rmse must be finite and >= 0".into()));
            }
            groups
                .entry(kappa.to_string())
                .or_default()
                .entry(n)
                .or_default()
                .push(rmse);
        }
        Ok(Self { groups })
    }

    /// `(n_grid, mean rmse, reps)` for one threshold scale; the only scale
    /// if `kappa` is `None`.
    pub fn means(&self, kappa: Option<f64>) -> Result<(Vec<usize>, Vec<f64>, usize)> {
        let group = match kappa {
            Some(k) => self.groups.get(&k.to_string()),
            None if self.groups.len() == 1 => self.groups.values().next(),
            None => {
                return Err(Error::param(
                    "kappa",
                    "study holds several threshold scales; select one",
                ))
            }
        }
        .ok_or_else(|| Error::param("kappa", "no rows for this threshold scale"))?;
        let ns: Vec<usize> = group.keys().copied().collect();
        let means = group.values().map(|v| mean_std(v).0).collect();
        let reps = group.values().map(Vec::len).min().unwrap_or(0);
        Ok((ns, means, reps))
    }
}

struct Job {
    col: usize,
    n: usize,
    rep: usize,
}

/// One [`RmseStudy`] per threshold scale, sharing samples and raw estimates
/// across scales (common random numbers). Thresholds are `kappa * t_{j,k}`.
pub fn threshold_scale_sweep(
    state: &StateModel,
    cfg: &EstimatorConfig,
    n_grid: &[usize],
    scales: &[f64],
    reps: usize,
    master_seed: u64,
) -> Result<Vec<RmseStudy>> {
    if reps < 2 {
        return Err(Error::param("reps", "need at least 2 replications"));
    }
    if n_grid.is_empty() {
        return Err(Error::param("n_grid", "empty"));
    }
    if let Some(s) = scales.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::param("scales", format!("threshold scale {s} must be >= 0")));
    }
    state.validate()?;
    let base = EstimatorConfig { kappa: 1.0, ..*cfg };
    let est = Estimator::new(base)?;

    let n_used: Vec<usize> = n_grid.iter().map(|&n| base.n_for(n)).collect::<Result<_>>()?;
    let truths: Vec<GroundTruth> = n_used.iter().map(|&ni| ground_truth(state, ni)).collect::<Result<_>>()?;
    for &ni in &n_used {
        est.table(ni)?;
    }

    let jobs: Vec<Job> = (0..n_grid.len())
        .flat_map(|col| (0..reps).map(move |rep| (col, rep)))
        .map(|(col, rep)| Job { col, n: n_grid[col], rep })
        .collect();

    // results[job] = rmse per scale
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|job| {
            let seed = replication_seed(master_seed, job.n, job.rep);
            let records = simulate(state, est.noise(), job.n, seed)?;
            let (n_index, raw, table) = est.raw(&records)?;
            let t = thresholds(&table, n_index, job.n, base.epsilon, 1.0)?;
            let truth = &truths[job.col].matrix;
            scales
                .iter()
                .map(|&s| relative_rmse(&soft_threshold(&raw, &t.scaled(s))?, truth))
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(scales
        .iter()
        .enumerate()
        .map(|(si, &s)| {
            let mut rmse = vec![vec![0.0; n_grid.len()]; reps];
            for (job, r) in jobs.iter().zip(&results) {
                rmse[job.rep][job.col] = r[si];
            }
            RmseStudy {
                state: *state,
                cfg: EstimatorConfig { kappa: s, ..*cfg },
                n_grid: n_grid.to_vec(),
                reps,
                master_seed,
                rmse,
                mean: Vec::new(),
                std: Vec::new(),
                n_used: n_used.clone(),
                truth_norm: truths.iter().map(|t| t.matrix.norm()).collect(),
                tail_mass: truths.iter().map(|t| t.tail_mass).collect(),
            }
            .finish()
        })
        .collect())
}

/// Relative RMSE of the thresholded estimator at each sample size.
pub fn run_study(
    state: &StateModel,
    cfg: &EstimatorConfig,
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
) -> Result<RmseStudy> {
    let mut v = threshold_scale_sweep(state, cfg, n_grid, &[cfg.kappa], reps, master_seed)?;
    Ok(v.remove(0))
}

/// One replication of the deviation experiment at threshold scale 1.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationOutcome {
    pub seed: u64,
    pub n_index: usize,
    /// `max_{J(N)} |rho_hat - rho| / t`; the deviation event at scale `s`
    /// holds iff this is `<= s`.
    pub worst_ratio: f64,
    /// `max_{J(N)} (|rho_hat - rho| - t)`.
    pub worst_excess: f64,
    /// `||rho_tilde - rho||_2^2` including the true tail.
    pub sq_error: f64,
    pub oracle_bound: f64,
}

impl DeviationOutcome {
    pub fn event_holds(&self) -> bool {
        self.worst_excess <= 0.0
    }
}

/// Deviation event, squared error and oracle bound for `reps` independent
/// replications at sample size `n`.
pub fn deviation_study(
    state: &StateModel,
    cfg: &EstimatorConfig,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<DeviationOutcome>> {
    let base = EstimatorConfig { kappa: 1.0, ..*cfg };
    let est = Estimator::new(base)?;
    let n_index = base.n_for(n)?;
    est.table(n_index)?;
    let truth = ground_truth(state, n_index)?;
    let tail_outside = truth.tail_mass;
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(master_seed, n, rep);
            let records = simulate(state, est.noise(), n, seed)?;
            let res = est.estimate(&records)?;
            let mut worst_ratio = 0.0f64;
            let mut worst_excess = f64::NEG_INFINITY;
            for (j, k) in index_set(n_index) {
                let dev = (res.raw.get(j, k) - truth.matrix.get(j, k)).norm();
                let t = res.thresholds.get(j, k);
                worst_excess = worst_excess.max(dev - t);
                let ratio = if dev == 0.0 { 0.0 } else if t == 0.0 { f64::INFINITY } else { dev / t };
                worst_ratio = worst_ratio.max(ratio);
            }
            Ok(DeviationOutcome {
                seed,
                n_index,
                worst_ratio,
                worst_excess,
                sq_error: res.thresholded.distance_sqr(&truth.matrix) + tail_outside,
                oracle_bound: oracle_bound(&truth.matrix, &res.thresholds, n_index) + tail_outside,
            })
        })
        .collect()
}

/// Fraction of outcomes whose deviation event holds at threshold scale `scale`.
pub fn coverage_at_scale(outcomes: &[DeviationOutcome], scale: f64) -> f64 {
    let hits = outcomes.iter().filter(|o| o.worst_ratio <= scale).count();
    hits as f64 / outcomes.len() as f64
}

/// Fraction of replications with `|rho_hat - rho| <= t` on all of `J(N)`.
pub fn coverage_rate(
    state: &StateModel,
    cfg: &EstimatorConfig,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<f64> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(Error::param(
            "epsilon",
            format!("coverage needs epsilon in (0, 1), got {}", cfg.epsilon),
        ));
    }
    if reps < 10 {
        return Err(Error::param("reps", "coverage needs at least 10 replications"));
    }
    let out = deviation_study(state, cfg, n, reps, master_seed)?;
    Ok(out.iter().filter(|o| o.event_holds()).count() as f64 / reps as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    #[serde(rename = "B_tilde")]
    pub b_tilde: f64,
    pub gamma: f64,
    pub n_grid: Vec<usize>,
    pub reps: usize,
}

/// OLS of `ln(mean)` on `ln(n)`, then `B~ = -8 gamma s / (1 + 2 s)`.
pub fn fit_power_law_means(n_grid: &[usize], means: &[f64], gamma: f64, reps: usize) -> Result<PowerLawFit> {
    if n_grid.len() != means.len() {
        return Err(Error::ShapeMismatch("n_grid and means differ in length".into()));
    }
    let mut distinct = n_grid.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::param("n_grid", "power-law fit needs at least 3 distinct n"));
    }
    if means.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::param("means", "mean RMSE must be positive and finite"));
    }
    let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&xs, &ys);
    if 1.0 + 2.0 * slope <= 0.0 {
        return Err(Error::PowerLawDiverges { slope });
    }
    let b_tilde = -8.0 * gamma * slope / (1.0 + 2.0 * slope);
    Ok(PowerLawFit {
        slope,
        b_tilde: if b_tilde == 0.0 { 0.0 } else { b_tilde },
        gamma,
        n_grid: n_grid.to_vec(),
        reps,
    })
}

pub fn fit_power_law(study: &RmseStudy, gamma: f64) -> Result<PowerLawFit> {
    fit_power_law_means(&study.n_grid, &study.mean, gamma, study.reps)
}

pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `2C^2/(Br) M^(2 - r/2) exp(-2B M^(r/2))`.
pub fn tail_bound_rhs(params: &ClassParams, m: usize) -> f64 {
    let c = 2.0 * params.c.powi(2) / (params.b * params.r);
    let mf = m as f64;
    c * mf.powf(2.0 - params.r / 2.0) * (-2.0 * params.b * mf.powf(params.r / 2.0)).exp()
}

/// Whether `sum_{j+k>M} |rho_{j,k}|^2 <= tail_bound_rhs(M)` for every `M` in
/// range, with tails taken from the matrix truncated at `2 max(M)`.
pub fn tail_bound_check(state: &StateModel, params: &ClassParams, m_range: RangeInclusive<usize>) -> Result<bool> {
    let dim = (2 * *m_range.end()).max(1);
    let m = density_matrix(state, dim)?;
    if !class_envelope_check(&m, params) {
        return Err(Error::OutsideClass {
            c: params.c,
            b: params.b,
            r: params.r,
        });
    }
    // mass by anti-diagonal j + k = s
    let mut by_sum = vec![0.0; 2 * dim];
    for j in 0..dim {
        for k in 0..dim {
            by_sum[j + k] += m.get(j, k).norm_sqr();
        }
    }
    Ok(m_range.into_iter().all(|mm| {
        let lhs: f64 = by_sum.iter().skip(mm + 1).sum();
        lhs <= tail_bound_rhs(params, mm)
    }))
}

pub fn save_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(File) -> Result<()>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    f(file)
}
