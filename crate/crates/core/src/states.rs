//! The catalog of test states: Fock-basis coefficients and quadrature
//! densities in closed form.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DensityMatrix;
use crate::special::ln_factorial;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateModel {
    Vacuum,
    SinglePhoton,
    Coherent { q0: f64 },
    Thermal { beta: f64 },
    #[serde(rename = "cat")]
    SchroedingerCat { q0: f64 },
}

/// Parameter-free name of a state kind, as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Vacuum,
    SinglePhoton,
    Coherent,
    Thermal,
    SchroedingerCat,
}

impl FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "vacuum" => Ok(StateKind::Vacuum),
            "single_photon" | "photon" => Ok(StateKind::SinglePhoton),
            "coherent" => Ok(StateKind::Coherent),
            "thermal" => Ok(StateKind::Thermal),
            "cat" | "schroedinger_cat" | "schrodinger_cat" => Ok(StateKind::SchroedingerCat),
            other => Err(Error::param(
                "state",
                format!("unknown state `{other}` (vacuum, single_photon, coherent, thermal, cat)"),
            )),
        }
    }
}

impl StateModel {
    /// Build a state from its kind and the optional amplitude / inverse temperature.
    pub fn from_parts(kind: StateKind, q0: Option<f64>, beta: Option<f64>) -> Result<Self> {
        let need = |v: Option<f64>, name: &'static str| {
            v.ok_or_else(|| Error::param(name, "required for this state"))
        };
        let state = match kind {
            StateKind::Vacuum => StateModel::Vacuum,
            StateKind::SinglePhoton => StateModel::SinglePhoton,
            StateKind::Coherent => StateModel::Coherent { q0: need(q0, "q0")? },
            StateKind::Thermal => StateModel::Thermal {
                beta: need(beta, "beta")?,
            },
            StateKind::SchroedingerCat => StateModel::SchroedingerCat { q0: need(q0, "q0")? },
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StateModel::Vacuum | StateModel::SinglePhoton => Ok(()),
            StateModel::Coherent { q0 } if !q0.is_finite() => {
                Err(Error::param("q0", format!("must be finite, got {q0}")))
            }
            StateModel::SchroedingerCat { q0 } if !(q0.is_finite() && q0 > 0.0) => {
                Err(Error::param("q0", format!("must be finite and > 0, got {q0}")))
            }
            StateModel::Thermal { beta } if !(beta.is_finite() && beta > 0.0) => {
                Err(Error::param("beta", format!("must be finite and > 0, got {beta}")))
            }
            _ => Ok(()),
        }
    }

    /// Entry `rho_{j,k}` of the infinite density matrix. All catalog states
    /// have real coefficients.
    pub fn coefficient(&self, j: usize, k: usize) -> f64 {
        match *self {
            StateModel::Vacuum => f64::from(u8::from(j == 0 && k == 0)),
            StateModel::SinglePhoton => f64::from(u8::from(j == 1 && k == 1)),
            StateModel::Coherent { q0 } => {
                let s = j + k;
                if q0 == 0.0 {
                    return f64::from(u8::from(s == 0));
                }
                let log = -0.5 * q0 * q0 + s as f64 * (q0.abs() * FRAC_1_SQRT_2).ln()
                    - 0.5 * (ln_factorial(j) + ln_factorial(k));
                parity_sign(q0, s) * log.exp()
            }
            StateModel::Thermal { beta } => {
                if j != k {
                    return 0.0;
                }
                -(-beta).exp_m1() * (-beta * k as f64).exp()
            }
            StateModel::SchroedingerCat { q0 } => {
                if j % 2 == 1 || k % 2 == 1 {
                    return 0.0;
                }
                let a = 0.5 * q0 * q0;
                // ln(e^a + e^-a)
                let ln_norm = a + (-2.0 * a).exp().ln_1p();
                let log = LN_2 + (j + k) as f64 * (q0 * FRAC_1_SQRT_2).ln()
                    - 0.5 * (ln_factorial(j) + ln_factorial(k))
                    - ln_norm;
                log.exp()
            }
        }
    }

    /// Conditional density `p_rho(x | phi)` of the ideal quadrature.
    pub fn quadrature_density(&self, x: f64, phi: f64) -> Result<f64> {
        check_phase(phi)?;
        Ok(self.density_unchecked(x, phi))
    }

    pub(crate) fn density_unchecked(&self, x: f64, phi: f64) -> f64 {
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        match *self {
            StateModel::Vacuum => (-x * x).exp() * inv_sqrt_pi,
            StateModel::SinglePhoton => 2.0 * x * x * (-x * x).exp() * inv_sqrt_pi,
            StateModel::Coherent { q0 } => {
                let d = x - q0 * phi.cos();
                (-d * d).exp() * inv_sqrt_pi
            }
            StateModel::Thermal { beta } => {
                let th = (0.5 * beta).tanh();
                (th / PI).sqrt() * (-x * x * th).exp()
            }
            StateModel::SchroedingerCat { q0 } => {
                let a = q0 * phi.cos();
                let bumps = (-(x - a).powi(2)).exp() + (-(x + a).powi(2)).exp();
                let fringe =
                    2.0 * (2.0 * q0 * x * phi.sin()).cos() * (-x * x - a * a).exp();
                (bumps + fringe) / (2.0 * PI.sqrt() * (1.0 + (-q0 * q0).exp()))
            }
        }
    }

    /// Tail mass `sum_{j+k >= n} |rho_{j,k}|^2` of the infinite matrix,
    /// summed out to `j, k < limit`.
    pub fn tail_mass(&self, n: usize, limit: usize) -> f64 {
        let mut s = 0.0;
        for j in 0..limit {
            for k in 0..limit {
                if j + k >= n {
                    s += self.coefficient(j, k).powi(2);
                }
            }
        }
        s
    }

    pub fn label(&self) -> String {
        match *self {
            StateModel::Vacuum => "vacuum".into(),
            StateModel::SinglePhoton => "single_photon".into(),
            StateModel::Coherent { q0 } => format!("coherent(q0={q0})"),
            StateModel::Thermal { beta } => format!("thermal(beta={beta})"),
            StateModel::SchroedingerCat { q0 } => format!("cat(q0={q0})"),
        }
    }
}

impl fmt::Display for StateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn parity_sign(q0: f64, power: usize) -> f64 {
    if q0 < 0.0 && power % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

pub(crate) fn check_phase(phi: f64) -> Result<()> {
    if (0.0..=PI).contains(&phi) {
        Ok(())
    } else {
        Err(Error::PhaseOutOfRange(phi))
    }
}

/// Truncation of the exact density matrix to `dim x dim`.
pub fn density_matrix(state: &StateModel, dim: usize) -> Result<DensityMatrix> {
    state.validate()?;
    DensityMatrix::from_fn(dim, |j, k| Complex64::new(state.coefficient(j, k), 0.0))
}

pub fn quadrature_density(state: &StateModel, x: f64, phi: f64) -> Result<f64> {
    state.quadrature_density(x, phi)
}

/// Parameters `(C, B, r)` of the coefficient-decay class
/// `|rho_{m,n}| <= C exp(-B (m+n)^{r/2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub c: f64,
    pub b: f64,
    pub r: f64,
}

impl ClassParams {
    pub fn new(c: f64, b: f64, r: f64) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(Error::param("C", format!("must be >= 1, got {c}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::param("B", format!("must be > 0, got {b}")));
        }
        if !(r > 0.0 && r <= 2.0) {
            return Err(Error::param("r", format!("must lie in (0, 2], got {r}")));
        }
        Ok(Self { c, b, r })
    }

    pub fn envelope(&self, m: usize, n: usize) -> f64 {
        self.c * (-self.b * ((m + n) as f64).powf(self.r / 2.0)).exp()
    }
}

/// Whether every stored entry lies under the class envelope.
pub fn class_envelope_check(m: &DensityMatrix, p: &ClassParams) -> bool {
    (0..m.dim()).all(|j| (0..m.dim()).all(|k| m.get(j, k).norm() <= p.envelope(j, k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn catalog() -> Vec<StateModel> {
        vec![
            StateModel::Vacuum,
            StateModel::SinglePhoton,
            StateModel::Coherent { q0: 3.0 },
            StateModel::Coherent { q0: -1.0 },
            StateModel::Thermal { beta: 0.25 },
            StateModel::Thermal { beta: 0.1 },
            StateModel::SchroedingerCat { q0: 3.0 },
        ]
    }

    #[test]
    fn vacuum_matrix() {
        let m = density_matrix(&StateModel::Vacuum, 3).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let expected = if j == 0 && k == 0 { 1.0 } else { 0.0 };
                assert_eq!(m.get(j, k), Complex64::new(expected, 0.0));
            }
        }
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(density_matrix(&StateModel::Vacuum, 0).is_err());
    }

    #[test]
    fn thermal_diagonal_and_trace() {
        let beta: f64 = 0.25;
        let m = density_matrix(&StateModel::Thermal { beta }, 400).unwrap();
        for k in 0..10 {
            let expected = (1.0 - (-beta).exp()) * (-beta * k as f64).exp();
            assert_relative_eq!(m.get(k, k).re, expected, max_relative = 1e-13);
        }
        assert!((m.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherent_entry_and_trace() {
        let st = StateModel::Coherent { q0: 3.0 };
        let m = density_matrix(&st, 60).unwrap();
        assert_relative_eq!(m.get(1, 1).re, 4.5 * (-4.5f64).exp(), max_relative = 1e-12);
        assert!((m.get(1, 1).re - 4.9989e-2).abs() < 5e-6);
        assert!((m.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cat_only_even_entries() {
        let m = density_matrix(&StateModel::SchroedingerCat { q0: 3.0 }, 60).unwrap();
        for j in 0..60 {
            for k in 0..60 {
                if j % 2 == 1 || k % 2 == 1 {
                    assert_eq!(m.get(j, k).norm(), 0.0);
                }
            }
        }
        assert!((m.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn catalog_matrices_are_physical() {
        for st in catalog() {
            let m = density_matrix(&st, 40).unwrap();
            assert_eq!(m.hermitian_defect(), 0.0, "{st}");
            for j in 0..40 {
                let d = m.get(j, j).re;
                assert!((0.0..=1.0).contains(&d));
            }
            assert!(m.min_eigenvalue() >= -1e-8, "{st}: {}", m.min_eigenvalue());
            let big = density_matrix(&st, 200).unwrap();
            assert!((big.trace().re - 1.0).abs() <= 1e-6, "{st}");
        }
    }

    #[test]
    fn density_examples() {
        let v = StateModel::Vacuum.quadrature_density(0.0, 1.0).unwrap();
        assert_relative_eq!(v, 1.0 / PI.sqrt(), max_relative = 1e-15);
        assert!((v - 0.5642).abs() < 1e-4);
        assert_eq!(StateModel::SinglePhoton.quadrature_density(0.0, 0.3).unwrap(), 0.0);
        let c = StateModel::Coherent { q0: 3.0 }.quadrature_density(3.0, 0.0).unwrap();
        assert_relative_eq!(c, 1.0 / PI.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn phase_outside_range_rejected() {
        assert!(matches!(
            StateModel::Vacuum.quadrature_density(0.0, -0.1),
            Err(Error::PhaseOutOfRange(_))
        ));
        assert!(StateModel::Vacuum.quadrature_density(0.0, 3.2).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        let q = 8192;
        let h = 50.0 / (q - 1) as f64;
        for st in catalog() {
            for phi in [0.0, PI / 4.0, PI / 2.0] {
                let mut s = 0.0;
                for i in 0..q {
                    let x = -25.0 + i as f64 * h;
                    let w = if i == 0 || i == q - 1 { 0.5 } else { 1.0 };
                    s += w * st.quadrature_density(x, phi).unwrap();
                }
                assert!((s * h - 1.0).abs() < 1e-6, "{st} phi={phi}: {}", s * h);
            }
        }
    }

    #[test]
    fn envelope_examples() {
        let vac = density_matrix(&StateModel::Vacuum, 5).unwrap();
        assert!(class_envelope_check(&vac, &ClassParams::new(1.0, 1.0, 2.0).unwrap()));
        let th = density_matrix(&StateModel::Thermal { beta: 0.25 }, 40).unwrap();
        assert!(class_envelope_check(&th, &ClassParams::new(1.0, 0.125, 2.0).unwrap()));
        assert!(!class_envelope_check(&th, &ClassParams::new(1.0, 1.0, 2.0).unwrap()));
        // k = 5 on its own already violates the tighter envelope
        let p = ClassParams::new(1.0, 1.0, 2.0).unwrap();
        assert!(th.get(5, 5).norm() > p.envelope(5, 5));
    }

    #[test]
    fn class_params_validated() {
        assert!(ClassParams::new(0.5, 1.0, 2.0).is_err());
        assert!(ClassParams::new(1.0, 0.0, 2.0).is_err());
        assert!(ClassParams::new(1.0, 1.0, 2.5).is_err());
        assert!(ClassParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(StateModel::from_parts(StateKind::Thermal, None, Some(-1.0)).is_err());
        assert!(StateModel::from_parts(StateKind::SchroedingerCat, Some(0.0), None).is_err());
        assert!(StateModel::from_parts(StateKind::Coherent, None, None).is_err());
        assert_eq!("cat".parse::<StateKind>().unwrap(), StateKind::SchroedingerCat);
    }

    #[test]
    fn serde_shape() {
        let v = serde_json::to_value(StateModel::Coherent { q0: 3.0 }).unwrap();
        assert_eq!(v, serde_json::json!({"kind": "coherent", "q0": 3.0}));
        let back: StateModel = serde_json::from_value(serde_json::json!({"kind": "cat", "q0": 2.0})).unwrap();
        assert_eq!(back, StateModel::SchroedingerCat { q0: 2.0 });
    }
}
