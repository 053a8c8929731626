//! Pattern functions `f_{j,k}` and their noise-adapted versions
//! `f^eta_{j,k}`, tabulated on a uniform grid by inverse FFT of the closed
//! form Fourier transform, with natural cubic spline interpolation.
//!
//! Conventions: `f(x) = (1/2pi) int f~(t) e^{itx} dt`. The table stores one
//! column per unordered pair `j >= k`, ordered by `j + k`, so the pairs of
//! the index set `J(N')` are a prefix for every `N' <= N`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::NoiseConfig;
use crate::special::{laguerre, log_factorial_ratio};

pub const DEFAULT_GRID: usize = 4096;
/// Default half-width `X` of the spatial grid `[-X, X)`.
pub const DEFAULT_HALF_WIDTH: f64 = 40.0;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const CUTOFF_CAP: f64 = 200.0;
/// Build fails above this relative imaginary residue.
pub const RESIDUE_LIMIT: f64 = 1e-6;

/// Discretization of a pattern table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of grid points (power of two).
    pub q: usize,
    /// Requested spatial half-width; shrunk if the frequency window would not
    /// reach the cutoff.
    pub half_width: f64,
    /// Truncation tolerance for the frequency cutoff rule.
    pub tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            q: DEFAULT_GRID,
            half_width: DEFAULT_HALF_WIDTH,
            tol: DEFAULT_TOL,
        }
    }
}

impl GridSpec {
    pub fn with_q(q: usize) -> Self {
        Self { q, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 8 || !self.q.is_power_of_two() {
            return Err(Error::param("grid", format!("Q must be a power of two >= 8, got {}", self.q)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::param("half_width", format!("must be > 0, got {}", self.half_width)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::param("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        Ok(())
    }
}

fn minus_i_pow(d: usize) -> Complex64 {
    match d % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn ft_with_gamma(j: usize, k: usize, t: f64, gamma: f64) -> Complex64 {
    let (hi, lo) = if j >= k { (j, k) } else { (k, j) };
    let d = hi - lo;
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let lag = laguerre(lo, d, 0.5 * t * t);
    if lag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let log_mag = PI.ln()
        + log_factorial_ratio(lo, hi)
        + (d + 1) as f64 * t.abs().ln()
        + (gamma - 0.25) * t * t
        + lag.abs().ln();
    let mut mag = log_mag.exp() * lag.signum();
    if t < 0.0 && d % 2 == 1 {
        mag = -mag;
    }
    minus_i_pow(d) * mag
}

/// Fourier transform of the pattern function `f_{j,k}`; symmetric in `(j, k)`.
pub fn pattern_ft(j: usize, k: usize, t: f64) -> Complex64 {
    ft_with_gamma(j, k, t, 0.0)
}

/// Fourier transform of the adapted pattern function: `pattern_ft * e^{gamma t^2}`,
/// evaluated in log space.
pub fn adapted_ft(j: usize, k: usize, t: f64, cfg: &NoiseConfig) -> Complex64 {
    ft_with_gamma(j, k, t, cfg.gamma())
}

/// Smallest `T` with `(1/4 - gamma) T^2 - (N + 2) ln(max(T, 2)) >= ln(1/tol)`.
pub fn frequency_cutoff(n: usize, cfg: &NoiseConfig, tol: f64) -> Result<f64> {
    let a = 0.25 - cfg.gamma();
    let target = (1.0 / tol).ln();
    let b = (n + 2) as f64;
    let ok = |t: f64| a * t * t - b * t.max(2.0).ln() >= target;
    let step = 0.01;
    let mut t = step;
    while t <= CUTOFF_CAP {
        if ok(t) {
            // refine within the last step
            let (mut lo, mut hi) = (t - step, t);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(hi);
        }
        t += step;
    }
    Err(Error::IllConditioned {
        eta: cfg.eta(),
        cutoff: if a > 0.0 { ((target + b * CUTOFF_CAP.ln()) / a).sqrt() } else { f64::INFINITY },
        cap: CUTOFF_CAP,
    })
}

/// Number of unordered pairs `j >= k` with `j + k <= n - 1`.
pub fn pair_count(n: usize) -> usize {
    (0..n).map(|s| s / 2 + 1).sum()
}

/// Sum over all periodic images `x + 2Xm`, `m != 0`, of `1/(x + 2Xm)^2`.
/// Diagonal pattern functions decay as `-1/x^2`; adding this back removes
/// the leading aliasing error of the FFT.
fn image_correction(x: f64, half_width: f64) -> f64 {
    let a = PI / (2.0 * half_width);
    let ax = a * x;
    if ax.abs() < 1e-3 {
        a * a / 3.0 + a.powi(4) * x * x / 15.0
    } else {
        a * a / ax.sin().powi(2) - 1.0 / (x * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    #[serde(rename = "N")]
    pub n: usize,
    pub eta: f64,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "T")]
    pub cutoff: f64,
    pub half_width: f64,
    pub dx: f64,
}

/// Precomputed adapted pattern functions for all `j + k <= N - 1`.
#[derive(Debug)]
pub struct PatternTable {
    noise: NoiseConfig,
    n: usize,
    q: usize,
    cutoff: f64,
    half_width: f64,
    dx: f64,
    pairs: Vec<(usize, usize)>,
    // column index of (j, k), row-major n x n
    lookup: Vec<usize>,
    // node-major: values[i * pairs.len() + p]
    values: Vec<f64>,
    second: Vec<f64>,
    sup_norms: Vec<f64>,
    residues: Vec<f64>,
    out_of_range: AtomicU64,
}

struct Column {
    values: Vec<f64>,
    second: Vec<f64>,
    sup: f64,
    residue: f64,
}

impl PatternTable {
    pub fn build(n: usize, noise: &NoiseConfig, grid: &GridSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("N", "must be >= 1"));
        }
        grid.validate()?;
        let cutoff = frequency_cutoff(n, noise, grid.tol)?;
        let q = grid.q;
        let window = PI * q as f64 / (2.0 * grid.half_width);
        let half_width = if window < cutoff {
            PI * q as f64 / (2.0 * cutoff)
        } else {
            grid.half_width
        };
        let dx = 2.0 * half_width / q as f64;
        let dt = PI / half_width;

        let mut pairs = Vec::with_capacity(pair_count(n));
        for s in 0..n {
            for k in 0..=s / 2 {
                pairs.push((s - k, k));
            }
        }
        let mut lookup = vec![usize::MAX; n * n];
        for (p, &(j, k)) in pairs.iter().enumerate() {
            lookup[j * n + k] = p;
            lookup[k * n + j] = p;
        }

        let fft = FftPlanner::<f64>::new().plan_fft_inverse(q);
        let thomas = ThomasFactor::new(q);
        let columns: Vec<Column> = pairs
            .par_iter()
            .map(|&(j, k)| {
                let mut buf: Vec<Complex64> = (0..q)
                    .map(|m| {
                        let t = (m as f64 - (q / 2) as f64) * dt;
                        if t.abs() > cutoff {
                            return Complex64::new(0.0, 0.0);
                        }
                        let v = adapted_ft(j, k, t, noise);
                        if m % 2 == 1 {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                fft.process(&mut buf);
                let scale = dt / (2.0 * PI);
                let mut values = Vec::with_capacity(q);
                let mut max_re = 0.0f64;
                let mut max_im = 0.0f64;
                for (m, z) in buf.iter().enumerate() {
                    let z = if m % 2 == 1 { -z } else { *z } * scale;
                    max_re = max_re.max(z.re.abs());
                    max_im = max_im.max(z.im.abs());
                    let x = -half_width + m as f64 * dx;
                    let fix = if j == k { image_correction(x, half_width) } else { 0.0 };
                    values.push(z.re + fix);
                }
                let residue = if max_re > 0.0 { max_im / max_re } else { 0.0 };
                let second = thomas.solve(&values, dx);
                let sup = refined_sup(&values, &second, dx);
                Column {
                    values,
                    second,
                    sup,
                    residue,
                }
            })
            .collect();

        for (c, &(j, k)) in columns.iter().zip(&pairs) {
            if c.residue > RESIDUE_LIMIT || !c.residue.is_finite() {
                return Err(Error::ImaginaryResidue {
                    j,
                    k,
                    residue: c.residue,
                });
            }
        }

        let np = pairs.len();
        let mut values = vec![0.0; q * np];
        let mut second = vec![0.0; q * np];
        for (p, c) in columns.iter().enumerate() {
            for i in 0..q {
                values[i * np + p] = c.values[i];
                second[i * np + p] = c.second[i];
            }
        }
        Ok(Self {
            noise: *noise,
            n,
            q,
            cutoff,
            half_width,
            dx,
            sup_norms: columns.iter().map(|c| c.sup).collect(),
            residues: columns.iter().map(|c| c.residue).collect(),
            pairs,
            lookup,
            values,
            second,
            out_of_range: AtomicU64::new(0),
        })
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn eta(&self) -> f64 {
        self.noise.eta()
    }

    /// Largest `N` covered: every `(j, k)` with `j + k <= N - 1`.
    pub fn max_index(&self) -> usize {
        self.n
    }

    pub fn grid_len(&self) -> usize {
        self.q
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx
    }

    pub fn metadata(&self) -> TableMetadata {
        TableMetadata {
            n: self.n,
            eta: self.eta(),
            q: self.q,
            cutoff: self.cutoff,
            half_width: self.half_width,
            dx: self.dx,
        }
    }

    /// Stored pairs `(j, k)` with `j >= k`, ordered by `j + k`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of evaluations that fell outside the grid and returned 0.
    pub fn out_of_range_count(&self) -> u64 {
        self.out_of_range.load(Ordering::Relaxed)
    }

    pub(crate) fn column(&self, j: usize, k: usize) -> Result<usize> {
        if j + k >= self.n {
            return Err(Error::IndexOutOfRange { j, k, n: self.n });
        }
        Ok(self.lookup[j * self.n + k])
    }

    /// Relative imaginary residue left by the inverse FFT for `(j, k)`.
    pub fn residue(&self, j: usize, k: usize) -> Result<f64> {
        Ok(self.residues[self.column(j, k)?])
    }

    /// Grid values of `f^eta_{j,k}`.
    pub fn node_values(&self, j: usize, k: usize) -> Result<Vec<f64>> {
        let p = self.column(j, k)?;
        let np = self.pairs.len();
        Ok((0..self.q).map(|i| self.values[i * np + p]).collect())
    }

    /// Spline interval and basis weights for `x`, or `None` outside the grid.
    pub(crate) fn spline_weights(&self, x: f64) -> Option<(usize, [f64; 4])> {
        let pos = (x + self.half_width) / self.dx;
        let last = (self.q - 1) as f64;
        if !(0.0..=last).contains(&pos) {
            self.out_of_range.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        let i = (pos.floor() as usize).min(self.q - 2);
        let u = pos - i as f64;
        let w = 1.0 - u;
        let h2 = self.dx * self.dx / 6.0;
        Some((i, [w, u, (w * w * w - w) * h2, (u * u * u - u) * h2]))
    }

    /// Spline value of column `p` given precomputed weights.
    #[inline]
    pub(crate) fn eval_column(&self, p: usize, i: usize, w: &[f64; 4]) -> f64 {
        let np = self.pairs.len();
        let a = i * np + p;
        let b = a + np;
        w[0] * self.values[a] + w[1] * self.values[b] + w[2] * self.second[a] + w[3] * self.second[b]
    }

    /// Accumulate `f^eta_{j,k}(x)` for the first `count` columns into `out`.
    #[inline]
    pub(crate) fn eval_prefix(&self, x: f64, count: usize, out: &mut [f64]) -> bool {
        match self.spline_weights(x) {
            None => false,
            Some((i, w)) => {
                let np = self.pairs.len();
                let (ya, yb) = (&self.values[i * np..i * np + count], &self.values[(i + 1) * np..(i + 1) * np + count]);
                let (ma, mb) = (&self.second[i * np..i * np + count], &self.second[(i + 1) * np..(i + 1) * np + count]);
                for p in 0..count {
                    out[p] = w[0] * ya[p] + w[1] * yb[p] + w[2] * ma[p] + w[3] * mb[p];
                }
                true
            }
        }
    }

    /// Cubic-spline value of `f^eta_{j,k}(x)`; 0 outside the grid.
    pub fn eval(&self, j: usize, k: usize, x: f64) -> Result<f64> {
        let p = self.column(j, k)?;
        Ok(match self.spline_weights(x) {
            Some((i, w)) => self.eval_column(p, i, &w),
            None => 0.0,
        })
    }

    /// `sup_x |f^eta_{j,k}(x)|`: the grid maximum refined by the spline's
    /// local extremum next to it.
    pub fn sup_norm(&self, j: usize, k: usize) -> Result<f64> {
        Ok(self.sup_norms[self.column(j, k)?])
    }

    /// Estimator kernel `G_{j,k}(x, phi) = f^eta_{j,k}(x) e^{-i(j-k)phi}`.
    pub fn kernel(&self, j: usize, k: usize, x: f64, phi: f64) -> Result<Complex64> {
        crate::states::check_phase(phi)?;
        let f = self.eval(j, k, x)?;
        let angle = -((j as f64) - (k as f64)) * phi;
        Ok(Complex64::from_polar(1.0, angle) * f)
    }

    /// Write `x,f` rows for one pattern function.
    pub fn write_csv<W: Write>(&self, j: usize, k: usize, w: W) -> Result<()> {
        let vals = self.node_values(j, k)?;
        let mut w = BufWriter::new(w);
        let wrap = |e| Error::io("<pattern>", e);
        writeln!(w, "x,f").map_err(wrap)?;
        for (i, v) in vals.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.x(i), v).map_err(wrap)?;
        }
        w.flush().map_err(wrap)
    }

    pub fn save_csv(&self, j: usize, k: usize, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(j, k, f)
    }
}

/// LU factors of the tridiagonal natural-spline system `[1 4 1]`, shared by
/// every column since the grid is common.
struct ThomasFactor {
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl ThomasFactor {
    fn new(q: usize) -> Self {
        let m = q - 2;
        let mut c_prime = vec![0.0; m];
        let mut denom = vec![0.0; m];
        for i in 0..m {
            let d = if i == 0 { 4.0 } else { 4.0 - c_prime[i - 1] };
            denom[i] = d;
            c_prime[i] = 1.0 / d;
        }
        Self { c_prime, denom }
    }

    /// Second derivatives of the natural cubic spline through `y`.
    fn solve(&self, y: &[f64], h: f64) -> Vec<f64> {
        let q = y.len();
        let m = q - 2;
        let scale = 6.0 / (h * h);
        let mut d = vec![0.0; m];
        for i in 0..m {
            let rhs = scale * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
            d[i] = if i == 0 { rhs / self.denom[0] } else { (rhs - d[i - 1]) / self.denom[i] };
        }
        for i in (0..m.saturating_sub(1)).rev() {
            d[i] -= self.c_prime[i] * d[i + 1];
        }
        let mut out = Vec::with_capacity(q);
        out.push(0.0);
        out.extend_from_slice(&d);
        out.push(0.0);
        out
    }
}

fn spline_on_interval(ya: f64, yb: f64, ma: f64, mb: f64, h: f64, u: f64) -> f64 {
    let w = 1.0 - u;
    w * ya + u * yb + h * h / 6.0 * ((w * w * w - w) * ma + (u * u * u - u) * mb)
}

fn refined_sup(y: &[f64], m: &[f64], h: f64) -> f64 {
    let mut best = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..y.len() - 1 {
        let (ya, yb, ma, mb) = (y[i], y[i + 1], m[i], m[i + 1]);
        // S'(u) = A u^2 + B u + C
        let c6 = h * h / 6.0;
        let a = 3.0 * c6 * (mb - ma);
        let b = 6.0 * c6 * ma;
        let c = (yb - ya) - c6 * (2.0 * ma + mb);
        let mut roots = Vec::with_capacity(2);
        if a.abs() < 1e-300 {
            if b != 0.0 {
                roots.push(-c / b);
            }
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let s = disc.sqrt();
                roots.push((-b + s) / (2.0 * a));
                roots.push((-b - s) / (2.0 * a));
            }
        }
        for u in roots {
            if (0.0..=1.0).contains(&u) {
                best = best.max(spline_on_interval(ya, yb, ma, mb, h, u).abs());
            }
        }
    }
    best
}

/// Build with the default spatial half-width.
pub fn build_table(n: usize, cfg: &NoiseConfig, q: usize, tol: f64) -> Result<PatternTable> {
    PatternTable::build(
        n,
        cfg,
        &GridSpec {
            q,
            half_width: DEFAULT_HALF_WIDTH,
            tol,
        },
    )
}

pub fn eval_pattern(table: &PatternTable, j: usize, k: usize, x: f64) -> Result<f64> {
    table.eval(j, k, x)
}

pub fn sup_norm(table: &PatternTable, j: usize, k: usize) -> Result<f64> {
    table.sup_norm(j, k)
}

#[allow(non_snake_case)]
pub fn kernel_G(table: &PatternTable, j: usize, k: usize, x: f64, phi: f64) -> Result<Complex64> {
    table.kernel(j, k, x, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn eta(e: f64) -> NoiseConfig {
        NoiseConfig::new(e).unwrap()
    }

    #[test]
    fn ft_examples() {
        let v = pattern_ft(0, 0, 2.0);
        assert_relative_eq!(v.re, 2.0 * PI * (-1.0f64).exp(), max_relative = 1e-14);
        assert_eq!(v.im, 0.0);
        assert!((v.re - 2.3115).abs() < 1e-4);

        let w = pattern_ft(1, 0, 1.0);
        assert_eq!(w.re, 0.0);
        assert_relative_eq!(w.im, -PI / SQRT_2 * (-0.25f64).exp(), max_relative = 1e-14);
        assert!((w.im + 1.7301).abs() < 1e-4);

        for j in 0..6 {
            for k in 0..6 {
                assert_eq!(pattern_ft(j, k, 0.0).norm(), 0.0);
                assert_eq!(pattern_ft(j, k, 0.8), pattern_ft(k, j, 0.8));
            }
        }
    }

    #[test]
    fn adapted_ft_examples() {
        for t in [-3.0, -0.5, 0.7, 2.0] {
            assert_eq!(adapted_ft(0, 0, t, &NoiseConfig::ideal()), pattern_ft(0, 0, t));
            assert_relative_eq!(
                adapted_ft(0, 0, t, &NoiseConfig::ideal()).re,
                PI * t.abs() * (-t * t / 4.0).exp(),
                max_relative = 1e-14
            );
        }
        let v = adapted_ft(0, 0, 2.0, &eta(0.9));
        assert_relative_eq!(v.re, 2.0 * PI * (-1.0f64).exp() * (4.0f64 / 36.0).exp(), max_relative = 1e-13);
        assert!((v.re - 2.5831).abs() < 1e-4);
    }

    #[test]
    fn ft_matches_direct_formula() {
        // direct evaluation without log space, moderate indices
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        for (j, k) in [(3, 1), (4, 4), (5, 0), (6, 2)] {
            for t in [-2.5f64, -0.3, 0.9, 3.1] {
                let d = j - k;
                let pref = PI * (2f64.powi(k as i32 - j as i32) * fact(k) / fact(j)).sqrt();
                let direct = minus_i_pow(d)
                    * (pref * t.abs() * t.powi(d as i32) * (-t * t / 4.0).exp() * laguerre(k, d, t * t / 2.0));
                let got = pattern_ft(j, k, t);
                assert!((got - direct).norm() <= 1e-12 * direct.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn hermitian_frequency_symmetry() {
        let cfg = eta(0.8);
        for j in 0..12 {
            for k in 0..12 {
                for t in [0.3, 1.7, 4.2, 9.0] {
                    let a = adapted_ft(j, k, -t, &cfg);
                    let b = adapted_ft(j, k, t, &cfg).conj();
                    assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn adapted_envelope_decays() {
        let cfg = eta(0.6);
        let big = adapted_ft(3, 1, 40.0, &cfg).norm();
        assert!(big < 1e-30);
    }

    #[test]
    fn cutoff_rule() {
        let t = frequency_cutoff(30, &eta(0.9), 1e-12).unwrap();
        let a = 0.25 - 1.0 / 36.0;
        assert!(a * t * t - 32.0 * t.ln() >= (1e12f64).ln() - 1e-9);
        let t2 = t - 0.01;
        assert!(a * t2 * t2 - 32.0 * t2.ln() < (1e12f64).ln());
        assert!(matches!(
            frequency_cutoff(30, &eta(0.5 + 1e-6), 1e-12),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn pair_layout() {
        assert_eq!(pair_count(1), 1);
        assert_eq!(pair_count(2), 2);
        assert_eq!(pair_count(30), 240);
        let table = PatternTable::build(4, &NoiseConfig::ideal(), &GridSpec::with_q(256)).unwrap();
        assert_eq!(table.pairs(), &[(0, 0), (1, 0), (2, 0), (1, 1), (3, 0), (2, 1)]);
        assert!(matches!(table.eval(2, 2, 0.0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn vacuum_reconstruction_from_table() {
        let table = build_table(1, &NoiseConfig::ideal(), 4096, 1e-12).unwrap();
        let vals = table.node_values(0, 0).unwrap();
        let s: f64 = vals
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let x = table.x(i);
                f * (-x * x).exp() / PI.sqrt()
            })
            .sum::<f64>()
            * table.dx();
        assert!((s - 1.0).abs() < 1e-4, "{s}");
    }

    #[test]
    fn continuity_in_eta() {
        let a = build_table(8, &NoiseConfig::ideal(), 4096, 1e-12).unwrap();
        let b = build_table(8, &eta(0.999_999), 4096, 1e-12).unwrap();
        for &(j, k) in a.pairs() {
            for x in [-3.0, -0.4, 0.0, 1.1, 2.7] {
                assert!((a.eval(j, k, x).unwrap() - b.eval(j, k, x).unwrap()).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn interpolation_hits_knots_and_is_symmetric() {
        let table = PatternTable::build(6, &eta(0.9), &GridSpec::default()).unwrap();
        let vals = table.node_values(3, 2).unwrap();
        for i in [100, 2048, 2049, 3000] {
            let x = table.x(i);
            assert!((table.eval(3, 2, x).unwrap() - vals[i]).abs() <= 1e-12 * vals[i].abs().max(1.0));
        }
        for x in [-1.3, 0.2, 2.2] {
            assert_eq!(table.eval(3, 2, x).unwrap(), table.eval(2, 3, x).unwrap());
            assert_eq!(table.sup_norm(3, 2).unwrap(), table.sup_norm(2, 3).unwrap());
        }
    }

    #[test]
    fn outside_grid_is_zero_and_counted() {
        let table = PatternTable::build(2, &NoiseConfig::ideal(), &GridSpec::with_q(512)).unwrap();
        assert_eq!(table.out_of_range_count(), 0);
        assert_eq!(table.eval(0, 0, 1e3).unwrap(), 0.0);
        assert_eq!(table.eval(1, 0, -1e3).unwrap(), 0.0);
        assert_eq!(table.out_of_range_count(), 2);
    }

    #[test]
    fn midpoints_agree_with_refined_table() {
        let cfg = eta(0.9);
        let coarse = PatternTable::build(8, &cfg, &GridSpec::with_q(4096)).unwrap();
        let fine = PatternTable::build(8, &cfg, &GridSpec::with_q(8192)).unwrap();
        assert_eq!(coarse.half_width(), fine.half_width());
        for &(j, k) in coarse.pairs() {
            let fine_vals = fine.node_values(j, k).unwrap();
            let scale = coarse.sup_norm(j, k).unwrap();
            for i in (1000..3000).step_by(37) {
                let x_mid = fine.x(2 * i + 1);
                let got = coarse.eval(j, k, x_mid).unwrap();
                assert!(
                    (got - fine_vals[2 * i + 1]).abs() <= 1e-4 * scale,
                    "({j},{k}) x={x_mid}: {got} vs {}",
                    fine_vals[2 * i + 1]
                );
            }
        }
    }

    #[test]
    fn sup_norm_at_least_grid_max() {
        let table = PatternTable::build(10, &eta(0.8), &GridSpec::default()).unwrap();
        for &(j, k) in table.pairs() {
            let grid_max = table.node_values(j, k).unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(table.sup_norm(j, k).unwrap() >= grid_max);
        }
        // f_00(0) = int_0^inf t e^{-t^2/4} dt = 2
        let ideal = PatternTable::build(1, &NoiseConfig::ideal(), &GridSpec::default()).unwrap();
        assert!((ideal.sup_norm(0, 0).unwrap() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn kernel_examples() {
        let table = PatternTable::build(5, &eta(0.9), &GridSpec::default()).unwrap();
        let x = 0.37;
        for phi in [0.0, 0.5, 2.0, PI] {
            assert_eq!(table.kernel(2, 2, x, phi).unwrap().im, 0.0);
            for &(j, k) in table.pairs() {
                let g = table.kernel(j, k, x, phi).unwrap();
                let h = table.kernel(k, j, x, phi).unwrap();
                assert!((g.conj() - h).norm() < 1e-15);
                assert!(g.norm() <= table.sup_norm(j, k).unwrap() * (1.0 + 1e-12));
            }
        }
        let g = table.kernel(1, 0, x, FRAC_PI_2).unwrap();
        let f = table.eval(1, 0, x).unwrap();
        assert!((g - Complex64::new(0.0, -f)).norm() < 1e-15);
        assert!(table.kernel(1, 0, x, -0.2).is_err());
    }

    #[test]
    fn pattern_dump_format() {
        let table = PatternTable::build(1, &NoiseConfig::ideal(), &GridSpec::with_q(64)).unwrap();
        let mut buf = Vec::new();
        table.write_csv(0, 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,f\n"));
        assert_eq!(text.lines().count(), 65);
        let meta = serde_json::to_value(table.metadata()).unwrap();
        for key in ["N", "eta", "Q", "T"] {
            assert!(meta.get(key).is_some(), "{key}");
        }
    }
}
