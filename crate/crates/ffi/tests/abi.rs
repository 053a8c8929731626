use std::ffi::CStr;
use std::ptr;

use homodyne_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hd_last_error()) }.to_string_lossy().into_owned()
}

const VACUUM: HdState = HdState {
    kind: HdStateKind::Vacuum,
    q0: 0.0,
    beta: 0.0,
};

#[test]
fn density_matrix_of_thermal_state() {
    let st = HdState {
        kind: HdStateKind::Thermal,
        q0: 0.0,
        beta: 0.25,
    };
    let mut re = vec![0.0; 9];
    let mut im = vec![0.0; 9];
    let s = unsafe { hd_density_matrix(&st, 3, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(s, HdStatus::Ok);
    let p = 1.0 - (-0.25f64).exp();
    assert!((re[0] - p).abs() < 1e-14);
    assert!((re[4] - p * (-0.25f64).exp()).abs() < 1e-14);
    assert_eq!(re[1], 0.0);
    assert!(im.iter().all(|v| *v == 0.0));
}

#[test]
fn invalid_state_reports_message() {
    let st = HdState {
        kind: HdStateKind::Thermal,
        q0: 0.0,
        beta: -1.0,
    };
    let mut re = [0.0; 1];
    let mut im = [0.0; 1];
    let s = unsafe { hd_density_matrix(&st, 1, re.as_mut_ptr(), im.as_mut_ptr()) };
    assert_eq!(s, HdStatus::InvalidArgument);
    assert!(last_error().contains("beta"));
}

#[test]
fn null_pointers_are_rejected() {
    let s = unsafe { hd_density_matrix(ptr::null(), 1, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, HdStatus::NullPointer);
    let s = unsafe { hd_table_eval(ptr::null(), 0, 0, 0.0, ptr::null_mut()) };
    assert_eq!(s, HdStatus::NullPointer);
    unsafe {
        hd_table_free(ptr::null_mut());
        hd_result_free(ptr::null_mut());
        hd_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { hd_result_n_used(ptr::null()) }, 0);
}

#[test]
fn simulate_is_deterministic_and_checks_eta() {
    let n = 500;
    let (mut y1, mut p1) = (vec![0.0; n], vec![0.0; n]);
    let (mut y2, mut p2) = (vec![0.0; n], vec![0.0; n]);
    unsafe {
        assert_eq!(hd_simulate(&VACUUM, 0.9, n, 3, y1.as_mut_ptr(), p1.as_mut_ptr()), HdStatus::Ok);
        assert_eq!(hd_simulate(&VACUUM, 0.9, n, 3, y2.as_mut_ptr(), p2.as_mut_ptr()), HdStatus::Ok);
    }
    assert_eq!(y1, y2);
    assert_eq!(p1, p2);
    assert!(p1.iter().all(|p| (0.0..=std::f64::consts::PI).contains(p)));
    let s = unsafe { hd_simulate(&VACUUM, 0.4, n, 3, y1.as_mut_ptr(), p1.as_mut_ptr()) };
    assert_eq!(s, HdStatus::InvalidArgument);
    assert!(last_error().contains("(1/2, 1]"));
}

#[test]
fn table_handle_round_trip() {
    let mut table = ptr::null_mut();
    assert_eq!(unsafe { hd_table_build(4, 1.0, 0, &mut table) }, HdStatus::Ok);
    let mut v = 0.0;
    assert_eq!(unsafe { hd_table_eval(table, 0, 0, 0.0, &mut v) }, HdStatus::Ok);
    assert!((v - 2.0).abs() < 1e-3, "{v}");
    let mut sup = 0.0;
    assert_eq!(unsafe { hd_table_sup_norm(table, 0, 0, &mut sup) }, HdStatus::Ok);
    assert!(sup >= v);
    assert_eq!(unsafe { hd_table_eval(table, 3, 3, 0.0, &mut v) }, HdStatus::InvalidArgument);
    unsafe { hd_table_free(table) };

    let mut table = ptr::null_mut();
    assert_eq!(unsafe { hd_table_build(4, 0.500001, 0, &mut table) }, HdStatus::Numerical);
    assert!(table.is_null());
}

#[test]
fn estimate_vacuum() {
    let n = 20_000;
    let (mut y, mut phi) = (vec![0.0; n], vec![0.0; n]);
    unsafe { hd_simulate(&VACUUM, 0.9, n, 11, y.as_mut_ptr(), phi.as_mut_ptr()) };
    let mut cfg = hd_estimator_config_default();
    cfg.epsilon = 0.1;
    cfg.n_override = 6;
    let mut result = ptr::null_mut();
    assert_eq!(unsafe { hd_estimate(y.as_ptr(), phi.as_ptr(), n, &cfg, &mut result) }, HdStatus::Ok);
    assert_eq!(unsafe { hd_result_n_used(result) }, 6);
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { hd_result_get(result, 0, 0, 1, &mut re, &mut im) }, HdStatus::Ok);
    assert!(re > 0.85 && re <= 1.0, "{re}");
    let mut t = 0.0;
    assert_eq!(unsafe { hd_result_threshold(result, 1, 0, &mut t) }, HdStatus::Ok);
    assert!(t > 0.0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { hd_result_to_json(result, &mut json) }, HdStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"N_used\":6"));
    unsafe {
        hd_string_free(json);
        hd_result_free(result);
    }
}

#[test]
fn estimate_rejects_empty_and_bad_phase() {
    let cfg = hd_estimator_config_default();
    let mut result = ptr::null_mut();
    let s = unsafe { hd_estimate(ptr::null(), ptr::null(), 0, &cfg, &mut result) };
    assert_eq!(s, HdStatus::InvalidArgument);
    assert_eq!(last_error(), "no records");
    let y = [0.1, 0.2];
    let phi = [0.0, 4.0];
    let s = unsafe { hd_estimate(y.as_ptr(), phi.as_ptr(), 2, &cfg, &mut result) };
    assert_eq!(s, HdStatus::InvalidArgument);
    assert!(result.is_null());
}

#[test]
fn header_declares_exports() {
    let header = include_str!("../include/homodyne.h");
    for f in [
        "hd_last_error",
        "hd_estimator_config_default",
        "hd_density_matrix",
        "hd_simulate",
        "hd_table_build",
        "hd_table_free",
        "hd_table_eval",
        "hd_table_sup_norm",
        "hd_estimate",
        "hd_result_free",
        "hd_result_n_used",
        "hd_result_get",
        "hd_result_threshold",
        "hd_result_to_json",
        "hd_string_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
}
