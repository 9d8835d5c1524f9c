use std::ffi::{c_int, c_void, CStr};
use std::ptr;

use mice_ffi::*;

fn last_error() -> String {
    let p = mice_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(mice_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn gp_round_trip_interpolates() {
    let ell = [0.4, 0.4];
    let mut kernel = ptr::null_mut();
    assert_eq!(unsafe { mice_kernel_new(MiceFamily::Matern52, ell.as_ptr(), 2, 0.0, &mut kernel) }, MiceStatus::Ok);
    let xs = [0.1, 0.2, 0.8, 0.3, 0.5, 0.9, 0.3, 0.6];
    let ys = [1.0, -2.0, 0.5, 3.0];
    let mut gp = ptr::null_mut();
    assert_eq!(unsafe { mice_gp_fit(kernel, xs.as_ptr(), 4, 2, ys.as_ptr(), &mut gp) }, MiceStatus::Ok);
    for (x, y) in xs.chunks(2).zip(ys) {
        let (mut m, mut v) = (0.0, 0.0);
        assert_eq!(unsafe { mice_gp_predict(gp, x.as_ptr(), 2, &mut m, &mut v) }, MiceStatus::Ok);
        assert!((m - y).abs() < 1e-8);
        assert!(v < 1e-8);
    }
    unsafe {
        mice_gp_free(gp);
        mice_kernel_free(kernel);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut kernel = ptr::null_mut();
    let bad = [-1.0];
    assert_eq!(
        unsafe { mice_kernel_new(MiceFamily::Matern52, bad.as_ptr(), 1, 0.0, &mut kernel) },
        MiceStatus::InvalidArgument
    );
    assert!(kernel.is_null());
    assert!(!last_error().is_empty());

    let mut out = 0.0;
    assert_eq!(unsafe { mice_rmspe(ptr::null(), [1.0].as_ptr(), 1, &mut out) }, MiceStatus::NullPointer);
    assert!(last_error().contains("predictions"));

    let mut obj = ptr::null_mut();
    assert_eq!(unsafe { mice_objective_new(c"nope".as_ptr(), 0, &mut obj) }, MiceStatus::InvalidArgument);
    assert!(obj.is_null());
}

#[test]
fn last_error_is_per_thread() {
    let mut out = 0.0;
    unsafe { mice_rmspe(ptr::null(), ptr::null(), 1, &mut out) };
    std::thread::spawn(|| assert!(mice_last_error_message().is_null())).join().unwrap();
}

#[test]
fn objective_handle_evaluates_branin() {
    let mut obj = ptr::null_mut();
    assert_eq!(unsafe { mice_objective_new(c"branin".as_ptr(), 0, &mut obj) }, MiceStatus::Ok);
    assert_eq!(unsafe { mice_objective_dim(obj) }, 2);
    // π, 2.275 is a global minimiser; scaled onto [-5,10] x [0,15].
    let u = [(std::f64::consts::PI + 5.0) / 15.0, 2.275 / 15.0];
    let mut y = 0.0;
    assert_eq!(unsafe { mice_objective_eval(obj, u.as_ptr(), 2, &mut y) }, MiceStatus::Ok);
    assert!((y - 0.397887).abs() < 1e-5);
    unsafe { mice_objective_free(obj) };
}

#[test]
fn rmspe_matches_definition() {
    let mut out = 0.0;
    let p = [1.0, 2.0];
    let t = [2.0, 4.0];
    assert_eq!(unsafe { mice_rmspe(p.as_ptr(), t.as_ptr(), 2, &mut out) }, MiceStatus::Ok);
    assert!((out - (2.5f64).sqrt()).abs() < 1e-15);
}

extern "C" fn bowl(x: *const f64, dim: usize, _: *mut c_void, out: *mut f64) -> c_int {
    let x = unsafe { std::slice::from_raw_parts(x, dim) };
    unsafe { *out = x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum() };
    0
}

extern "C" fn failing(_: *const f64, _: usize, _: *mut c_void, _: *mut f64) -> c_int {
    7
}

#[test]
fn sequential_run_through_callback() {
    let ell = [0.3, 0.3];
    let mut opts = mice_sequential_options_default();
    opts.budget = 15;
    opts.initial = 5;
    opts.n_cand = 40;
    opts.lengthscales = ell.as_ptr();
    let mut points = vec![f64::NAN; 30];
    let mut values = vec![f64::NAN; 15];
    let status =
        unsafe { mice_run_sequential(Some(bowl), ptr::null_mut(), 2, &opts, points.as_mut_ptr(), values.as_mut_ptr()) };
    assert_eq!(status, MiceStatus::Ok);
    for (x, y) in points.chunks(2).zip(&values) {
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!((y - x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>()).abs() < 1e-12);
    }

    let status = unsafe {
        mice_run_sequential(Some(failing), ptr::null_mut(), 2, &opts, points.as_mut_ptr(), values.as_mut_ptr())
    };
    assert_eq!(status, MiceStatus::Callback);
    assert!(last_error().contains('7'));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mice.h")).unwrap();
    for sym in [
        "mice_last_error_message",
        "mice_version",
        "mice_kernel_new",
        "mice_kernel_free",
        "mice_gp_fit",
        "mice_gp_predict",
        "mice_gp_free",
        "mice_objective_new",
        "mice_objective_dim",
        "mice_objective_eval",
        "mice_objective_free",
        "mice_sequential_options_default",
        "mice_run_sequential",
        "mice_rmspe",
        "MICE_STATUS_NUMERICAL",
        "typedef struct MiceGp MiceGp",
    ] {
        assert!(header.contains(sym), "{sym} missing from mice.h");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/mice.h");
    let Ok(status) =
        std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header]).status()
    else {
        return;
    };
    assert!(status.success());
}
