//! Truncated density matrices in the Fock basis.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries with modulus at or below this are omitted from the JSON form.
pub const JSON_ENTRY_CUTOFF: f64 = 1e-15;

/// Square complex matrix `[rho_{j,k}]` for `0 <= j, k < dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SparseMatrix", try_from = "SparseMatrix")]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            dim,
            entries: vec![Complex64::new(0.0, 0.0); dim * dim],
        })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for j in 0..dim {
            for k in 0..dim {
                m.entries[j * dim + k] = f(j, k);
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(j, k)`; zero outside the stored block.
    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        if j < self.dim && k < self.dim {
            self.entries[j * self.dim + k]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn set(&mut self, j: usize, k: usize, value: Complex64) {
        self.entries[j * self.dim + k] = value;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|j| self.get(j, j)).sum()
    }

    /// Squared l2 (Frobenius) norm.
    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Squared l2 distance over the union of both index supports.
    pub fn distance_sqr(&self, other: &DensityMatrix) -> f64 {
        let d = self.dim.max(other.dim);
        let mut s = 0.0;
        for j in 0..d {
            for k in 0..d {
                s += (self.get(j, k) - other.get(j, k)).norm_sqr();
            }
        }
        s
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dim {
            for k in 0..=j {
                worst = worst.max((self.get(j, k) - self.get(k, j).conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |j, k| {
            0.5 * (self.get(j, k) + self.get(k, j).conj())
        });
        m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Number of entries with nonzero modulus.
    pub fn count_nonzero(&self) -> usize {
        self.entries.iter().filter(|z| z.norm() > 0.0).count()
    }

    /// The leading `dim x dim` block, zero-padded if `dim` exceeds the current size.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        Self::from_fn(dim, |j, k| self.get(j, k))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "k", "re", "im"])?;
        for j in 0..self.dim {
            for k in 0..self.dim {
                let z = self.get(j, k);
                out.write_record(&[
                    j.to_string(),
                    k.to_string(),
                    format!("{:.17e}", z.re),
                    format!("{:.17e}", z.im),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut triples = Vec::new();
        for row in rdr.deserialize() {
            let (j, k, re, im): (usize, usize, f64, f64) = row?;
            triples.push((j, k, re, im));
        }
        let dim = triples.iter().map(|t| t.0.max(t.1) + 1).max().unwrap_or(0);
        let mut m = Self::zeros(dim)?;
        for (j, k, re, im) in triples {
            m.set(j, k, Complex64::new(re, im));
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct SparseMatrix {
    dim: usize,
    entries: Vec<(usize, usize, f64, f64)>,
}

impl From<DensityMatrix> for SparseMatrix {
    fn from(m: DensityMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.dim {
            for k in 0..m.dim {
                let z = m.get(j, k);
                if z.norm() > JSON_ENTRY_CUTOFF {
                    entries.push((j, k, z.re, z.im));
                }
            }
        }
        SparseMatrix { dim: m.dim, entries }
    }
}

impl TryFrom<SparseMatrix> for DensityMatrix {
    type Error = Error;

    fn try_from(s: SparseMatrix) -> Result<Self> {
        let mut m = DensityMatrix::zeros(s.dim)?;
        for (j, k, re, im) in s.entries {
            if j >= s.dim || k >= s.dim {
                return Err(Error::ShapeMismatch(format!(
                    "entry ({j},{k}) outside dim {}",
                    s.dim
                )));
            }
            m.set(j, k, Complex64::new(re, im));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(DensityMatrix::zeros(0), Err(Error::ZeroDimension)));
    }

    #[test]
    fn json_lists_only_significant_entries() {
        let mut m = DensityMatrix::zeros(3).unwrap();
        m.set(0, 0, Complex64::new(1.0, 0.0));
        m.set(1, 2, Complex64::new(1e-16, 0.0));
        m.set(2, 1, Complex64::new(0.25, -0.5));
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["dim"], 3);
        assert_eq!(json["entries"].as_array().unwrap().len(), 2);
        assert_eq!(json["entries"][1], serde_json::json!([2, 1, 0.25, -0.5]));
    }

    #[test]
    fn csv_has_header_and_all_entries() {
        let m = DensityMatrix::from_fn(2, |j, k| Complex64::new(j as f64, k as f64)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("j,k,re,im\n"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(DensityMatrix::read_csv(text.as_bytes()).unwrap(), m);
    }

    #[test]
    fn distance_over_union_of_supports() {
        let mut a = DensityMatrix::zeros(1).unwrap();
        a.set(0, 0, Complex64::new(1.0, 0.0));
        let mut b = DensityMatrix::zeros(3).unwrap();
        b.set(2, 2, Complex64::new(2.0, 0.0));
        assert_eq!(a.distance_sqr(&b), 5.0);
        assert_eq!(b.distance_sqr(&a), 5.0);
    }
}
