use std::ffi::{c_int, CStr, CString};
use std::ptr;

use zoll_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(zoll_last_error()) }.to_string_lossy().into_owned()
}

fn model(name: &str) -> *mut ZollModel {
    let n = CString::new(name).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { zoll_model_new(n.as_ptr(), &mut m) }, ZollStatus::Ok);
    m
}

fn observable(m: *const ZollModel, desc: &str) -> *mut ZollObservable {
    let d = CString::new(desc).unwrap();
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { zoll_observable_parse(m, d.as_ptr(), &mut o) }, ZollStatus::Ok, "{}", last_error());
    o
}

#[test]
fn band_functional_and_hemisphere_g1() {
    let m = model("sphere");
    let band = observable(m, "indicator(band(|lat|<=pi/6))");
    let mut v = 0.0;
    assert_eq!(unsafe { zoll_g2_t(m, band, 2.0 * std::f64::consts::PI, 24, 16, &mut v) }, ZollStatus::Ok);
    assert!((v - 1.0 / 3.0).abs() < 1e-3, "{v}");
    assert!(last_error().is_empty());

    let hemi = observable(m, "indicator(cap(lat>0))");
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { zoll_spectrum_new(m, 6.0, &mut s) }, ZollStatus::Ok);
    assert_eq!(unsafe { zoll_g1(s, hemi, &mut v) }, ZollStatus::Ok);
    assert!((v - 0.5).abs() < 1e-10);
    let mut c = 0.0;
    assert_eq!(unsafe { zoll_observability_constant(s, hemi, f64::INFINITY, &mut c) }, ZollStatus::Ok);
    assert!((c - v).abs() < 1e-8);

    let mut n = 0usize;
    assert_eq!(unsafe { zoll_spectrum_eigenvalues(s, ptr::null_mut(), 0, &mut n) }, ZollStatus::Ok);
    assert_eq!(n, 49);
    let mut buf = vec![0.0; n];
    assert_eq!(unsafe { zoll_spectrum_eigenvalues(s, buf.as_mut_ptr(), n, &mut n) }, ZollStatus::Ok);
    assert_eq!(buf[0], 0.0);
    assert!((buf[48] - 42f64.sqrt()).abs() < 1e-12);
    unsafe {
        zoll_spectrum_free(s);
        zoll_observable_free(band);
        zoll_observable_free(hemi);
        zoll_model_free(m);
    }
}

#[test]
fn detector_verdicts() {
    let sphere: Vec<f64> = (0..=40).map(|l: i32| f64::from(l * (l + 1)).sqrt()).collect();
    let (mut verdict, mut period, mut sigma): (c_int, f64, f64) = (99, 0.0, 0.0);
    assert_eq!(
        unsafe { zoll_detect(sphere.as_ptr(), sphere.len(), &mut verdict, &mut period, &mut sigma) },
        ZollStatus::Ok
    );
    assert_eq!(verdict, ZOLL_VERDICT_ZOLL);
    assert!((period - 2.0 * std::f64::consts::PI).abs() < 0.02 * period);
    assert!((sigma - 0.5).abs() < 0.05);
    assert_eq!(
        unsafe { zoll_detect(sphere.as_ptr(), 1, &mut verdict, &mut period, &mut sigma) },
        ZollStatus::InvalidArgument
    );
}

#[test]
fn errors_and_nulls() {
    let mut m = ptr::null_mut();
    let bad = CString::new("klein_bottle").unwrap();
    assert_eq!(unsafe { zoll_model_new(bad.as_ptr(), &mut m) }, ZollStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { zoll_model_new(ptr::null(), &mut m) }, ZollStatus::NullPointer);
    assert!(last_error().contains("name"));

    let s = model("sphere");
    let mut o = ptr::null_mut();
    let d = CString::new("indicator(blob(1))").unwrap();
    assert_eq!(unsafe { zoll_observable_parse(s, d.as_ptr(), &mut o) }, ZollStatus::ParseError);

    let rev = model("zoll_revolution_demo");
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { zoll_spectrum_new(rev, 4.0, &mut t) }, ZollStatus::Unsupported);

    let cfg = CString::new("[flow]\nstepp = 1\n").unwrap();
    let name = CString::new("detector").unwrap();
    let mut pass = 0;
    assert_eq!(unsafe { zoll_run_suite(name.as_ptr(), cfg.as_ptr(), ptr::null(), &mut pass) }, ZollStatus::ParseError);
    assert!(last_error().contains("line 2"));
    unsafe {
        zoll_model_free(s);
        zoll_model_free(rev);
        zoll_model_free(ptr::null_mut());
    }
}

#[test]
fn suite_through_ffi() {
    let name = CString::new("detector").unwrap();
    let cfg = CString::new("[model]\nkind = torus\n[detector]\ncutoff = 20\n").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut pass = 0;
    assert_eq!(unsafe { zoll_run_suite(name.as_ptr(), cfg.as_ptr(), out.as_ptr(), &mut pass) }, ZollStatus::Ok);
    assert_eq!(pass, 1);
    assert!(dir.path().join("detector.json").exists());
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(zoll_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/zoll.h");
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(st) =
            std::process::Command::new(cc).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header]).status()
        else {
            eprintln!("{cc} not available, skipping");
            continue;
        };
        assert!(st.success(), "{cc} rejected the header");
    }
}
