//! C interface to the homodyne estimator.
//!
//! Functions return an [`HdStatus`]; on failure [`hd_last_error`] gives a
//! message for the calling thread. Tables and results are opaque handles
//! released with their `_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use homodyne::estimator::{Estimator, EstimationResult, EstimatorConfig};
use homodyne::measurement::{simulate, MeasurementRecord, NoiseConfig};
use homodyne::patterns::{GridSpec, PatternTable};
use homodyne::states::{density_matrix, StateModel};
use homodyne::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdStatus {
    Ok = 0,
    InvalidArgument = 1,
    Numerical = 2,
    Parse = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdStateKind {
    Vacuum = 0,
    SinglePhoton = 1,
    Coherent = 2,
    Thermal = 3,
    Cat = 4,
}

/// Catalog state; `q0` is read for coherent and cat, `beta` for thermal.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HdState {
    pub kind: HdStateKind,
    pub q0: f64,
    pub beta: f64,
}

/// Estimator settings. `n_override == 0` selects `N` from the sample size.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HdEstimatorConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub r0: f64,
    pub b0: f64,
    pub n_override: usize,
    pub kappa: f64,
    pub grid: usize,
}

pub struct HdTable(PatternTable);

pub struct HdResult(EstimationResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> HdStatus {
    match e.kind() {
        "invalid_argument" => HdStatus::InvalidArgument,
        "numerical" => HdStatus::Numerical,
        "parse" => HdStatus::Parse,
        _ => HdStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), HdStatus>) -> HdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            HdStatus::Panic
        }
    }
}

fn fail(e: Error) -> HdStatus {
    set_error(e.to_string());
    status_of(&e)
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, HdStatus>;
}

impl<T> OrStatus<T> for homodyne::Result<T> {
    fn or_status(self) -> Result<T, HdStatus> {
        self.map_err(fail)
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), HdStatus> {
    if p.is_null() {
        set_error(format!("null pointer `{name}`"));
        Err(HdStatus::NullPointer)
    } else {
        Ok(())
    }
}

fn to_model(s: &HdState) -> homodyne::Result<StateModel> {
    let m = match s.kind {
        HdStateKind::Vacuum => StateModel::Vacuum,
        HdStateKind::SinglePhoton => StateModel::SinglePhoton,
        HdStateKind::Coherent => StateModel::Coherent { q0: s.q0 },
        HdStateKind::Thermal => StateModel::Thermal { beta: s.beta },
        HdStateKind::Cat => StateModel::SchroedingerCat { q0: s.q0 },
    };
    m.validate()?;
    Ok(m)
}

/// Message for the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn hd_estimator_config_default() -> HdEstimatorConfig {
    let d = EstimatorConfig::default();
    HdEstimatorConfig {
        eta: d.eta,
        epsilon: d.epsilon,
        r0: d.r0,
        b0: d.b0,
        n_override: 0,
        kappa: d.kappa,
        grid: d.grid.q,
    }
}

/// Row-major `dim x dim` truncation of the state's density matrix.
#[no_mangle]
pub unsafe extern "C" fn hd_density_matrix(
    state: *const HdState,
    dim: usize,
    re_out: *mut f64,
    im_out: *mut f64,
) -> HdStatus {
    guard(|| {
        non_null(state, "state")?;
        non_null(re_out, "re_out")?;
        non_null(im_out, "im_out")?;
        let m = density_matrix(&to_model(&*state).or_status()?, dim).or_status()?;
        let re = std::slice::from_raw_parts_mut(re_out, dim * dim);
        let im = std::slice::from_raw_parts_mut(im_out, dim * dim);
        for (i, z) in m.entries().iter().enumerate() {
            re[i] = z.re;
            im[i] = z.im;
        }
        Ok(())
    })
}

/// Fill `y_out[0..n]` and `phi_out[0..n]` with simulated records.
#[no_mangle]
pub unsafe extern "C" fn hd_simulate(
    state: *const HdState,
    eta: f64,
    n: usize,
    seed: u64,
    y_out: *mut f64,
    phi_out: *mut f64,
) -> HdStatus {
    guard(|| {
        non_null(state, "state")?;
        non_null(y_out, "y_out")?;
        non_null(phi_out, "phi_out")?;
        let model = to_model(&*state).or_status()?;
        let noise = NoiseConfig::new(eta).or_status()?;
        let records = simulate(&model, &noise, n, seed).or_status()?;
        let y = std::slice::from_raw_parts_mut(y_out, n);
        let phi = std::slice::from_raw_parts_mut(phi_out, n);
        for (i, r) in records.iter().enumerate() {
            y[i] = r.y;
            phi[i] = r.phi;
        }
        Ok(())
    })
}

/// Build the pattern-function table for `j + k < n` at efficiency `eta` on
/// a grid of `q` points (0 selects the default).
#[no_mangle]
pub unsafe extern "C" fn hd_table_build(n: usize, eta: f64, q: usize, out: *mut *mut HdTable) -> HdStatus {
    guard(|| {
        non_null(out, "out")?;
        let noise = NoiseConfig::new(eta).or_status()?;
        let grid = if q == 0 { GridSpec::default() } else { GridSpec::with_q(q) };
        let table = PatternTable::build(n, &noise, &grid).or_status()?;
        *out = Box::into_raw(Box::new(HdTable(table)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_table_free(table: *mut HdTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Spline value of `f_{j,k}` at `x`; zero outside the grid.
#[no_mangle]
pub unsafe extern "C" fn hd_table_eval(
    table: *const HdTable,
    j: usize,
    k: usize,
    x: f64,
    out: *mut f64,
) -> HdStatus {
    guard(|| {
        non_null(table, "table")?;
        non_null(out, "out")?;
        *out = (*table).0.eval(j, k, x).or_status()?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_table_sup_norm(table: *const HdTable, j: usize, k: usize, out: *mut f64) -> HdStatus {
    guard(|| {
        non_null(table, "table")?;
        non_null(out, "out")?;
        *out = (*table).0.sup_norm(j, k).or_status()?;
        Ok(())
    })
}

/// Estimate from `n` records given as parallel arrays.
#[no_mangle]
pub unsafe extern "C" fn hd_estimate(
    y: *const f64,
    phi: *const f64,
    n: usize,
    config: *const HdEstimatorConfig,
    out: *mut *mut HdResult,
) -> HdStatus {
    guard(|| {
        non_null(config, "config")?;
        non_null(out, "out")?;
        if n > 0 {
            non_null(y, "y")?;
            non_null(phi, "phi")?;
        }
        let c = &*config;
        let cfg = EstimatorConfig {
            eta: c.eta,
            epsilon: c.epsilon,
            r0: c.r0,
            b0: c.b0,
            n_override: (c.n_override > 0).then_some(c.n_override),
            kappa: c.kappa,
            grid: if c.grid == 0 { GridSpec::default() } else { GridSpec::with_q(c.grid) },
        };
        let records: Vec<MeasurementRecord> = if n == 0 {
            Vec::new()
        } else {
            let ys = std::slice::from_raw_parts(y, n);
            let ps = std::slice::from_raw_parts(phi, n);
            for &p in ps {
                if !(0.0..=std::f64::consts::PI).contains(&p) {
                    return Err(fail(Error::PhaseOutOfRange(p)));
                }
            }
            ys.iter().zip(ps).map(|(&y, &phi)| MeasurementRecord { y, phi }).collect()
        };
        let est = Estimator::new(cfg).or_status()?;
        let result = est.estimate(&records).or_status()?;
        *out = Box::into_raw(Box::new(HdResult(result)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_result_free(result: *mut HdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// `N` used by the estimate; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hd_result_n_used(result: *const HdResult) -> usize {
    if result.is_null() {
        0
    } else {
        (*result).0.n_used
    }
}

/// Entry `(j, k)` of the thresholded (`thresholded != 0`) or raw estimate.
#[no_mangle]
pub unsafe extern "C" fn hd_result_get(
    result: *const HdResult,
    j: usize,
    k: usize,
    thresholded: i32,
    re: *mut f64,
    im: *mut f64,
) -> HdStatus {
    guard(|| {
        non_null(result, "result")?;
        non_null(re, "re")?;
        non_null(im, "im")?;
        let r = &(*result).0;
        let m = if thresholded != 0 { &r.thresholded } else { &r.raw };
        let z = m.get(j, k);
        *re = z.re;
        *im = z.im;
        Ok(())
    })
}

/// Threshold `t_{j,k}`; zero outside the index set.
#[no_mangle]
pub unsafe extern "C" fn hd_result_threshold(result: *const HdResult, j: usize, k: usize, out: *mut f64) -> HdStatus {
    guard(|| {
        non_null(result, "result")?;
        non_null(out, "out")?;
        *out = (*result).0.thresholds.get(j, k);
        Ok(())
    })
}

/// JSON serialization of the result; release with [`hd_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hd_result_to_json(result: *const HdResult, out: *mut *mut c_char) -> HdStatus {
    guard(|| {
        non_null(result, "result")?;
        non_null(out, "out")?;
        let s = serde_json::to_string(&(*result).0).map_err(|e| fail(e.into()))?;
        *out = CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
