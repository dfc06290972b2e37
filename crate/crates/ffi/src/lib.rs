//! C ABI for zoll-core.
//!
//! Every function returns a [`ZollStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`zoll_last_error`]. Handles are created by `*_new`/`*_parse` and released
//! by the matching `*_free`, which accepts null.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use zoll_core::config::ExperimentConfig;
use zoll_core::detector::{detect, DetectorSettings, Verdict};
use zoll_core::functionals::{g2, g2_t, FunctionalSettings, PhaseGrid};
use zoll_core::gramian::{observability_constant, GramianBase, Horizon, DEFAULT_BASIS_CAP};
use zoll_core::measures::g1;
use zoll_core::observable::Observable;
use zoll_core::spectral::{eigenbasis, SpectrumTable};
use zoll_core::suites::run_suite;
use zoll_core::surface::SurfaceModel;
use zoll_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZollStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    Unsupported = 4,
    NumericError = 5,
    Panic = 6,
}

/// Verdict codes written by [`zoll_detect`].
pub const ZOLL_VERDICT_NOT_ZOLL: c_int = -1;
pub const ZOLL_VERDICT_INCONCLUSIVE: c_int = 0;
pub const ZOLL_VERDICT_ZOLL: c_int = 1;

/// A surface model.
pub struct ZollModel(SurfaceModel);

/// An observable on the unit cotangent bundle of a model.
pub struct ZollObservable(Observable);

/// A closed-form eigenbasis table.
pub struct ZollSpectrum(SpectrumTable);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ZollStatus {
    match e {
        Error::Parse { .. } | Error::Config { .. } => ZollStatus::ParseError,
        Error::Unsupported(_) => ZollStatus::Unsupported,
        Error::Integration { .. } | Error::Numeric(_) | Error::Accuracy(_) | Error::Budget(_) => {
            ZollStatus::NumericError
        }
        Error::Domain { .. } | Error::Precondition(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) => {
            ZollStatus::InvalidArgument
        }
    }
}

struct Fail(ZollStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ZollStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            ZollStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            ZollStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ZollStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(ZollStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn zoll_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zoll_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `sphere`, `torus`, `zoll_revolution_demo` or `round_revolution`.
///
/// # Safety
/// `name` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_model_new(name: *const c_char, out: *mut *mut ZollModel) -> ZollStatus {
    guard(|| {
        let m = SurfaceModel::from_name(text(name, "name")?)?;
        put(out, Box::into_raw(Box::new(ZollModel(m))), "out")
    })
}

/// # Safety
/// `model` is null or came from [`zoll_model_new`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zoll_model_free(model: *mut ZollModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses `const(c)`, `indicator(R)`, `mollifier(R,k)` or `smooth(name)`.
///
/// # Safety
/// `model` is a live handle, `desc` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_observable_parse(
    model: *const ZollModel,
    desc: *const c_char,
    out: *mut *mut ZollObservable,
) -> ZollStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let o = Observable::parse(m.0, text(desc, "desc")?)?;
        put(out, Box::into_raw(Box::new(ZollObservable(o))), "out")
    })
}

/// # Safety
/// `obs` is null or came from [`zoll_observable_parse`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zoll_observable_free(obs: *mut ZollObservable) {
    if !obs.is_null() {
        drop(Box::from_raw(obs));
    }
}

fn grid(m: SurfaceModel, base: usize, dirs: usize) -> Result<PhaseGrid, Fail> {
    Ok(PhaseGrid::new(m, base, dirs)?)
}

/// Finite-horizon functional: infimum over the phase grid (base × directions)
/// of the time-`t` average.
///
/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_g2_t(
    model: *const ZollModel,
    obs: *const ZollObservable,
    t: f64,
    base: usize,
    directions: usize,
    out: *mut f64,
) -> ZollStatus {
    guard(|| {
        let (m, o) = (deref(model, "model")?, deref(obs, "obs")?);
        let r = g2_t(&o.0, t, &grid(m.0, base, directions)?, &FunctionalSettings::default())?;
        put(out, r.value, "out")
    })
}

/// Doubling limit over horizons t0·2^j, j ≤ doublings.
///
/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_g2(
    model: *const ZollModel,
    obs: *const ZollObservable,
    t0: f64,
    doublings: usize,
    base: usize,
    directions: usize,
    out: *mut f64,
) -> ZollStatus {
    guard(|| {
        let (m, o) = (deref(model, "model")?, deref(obs, "obs")?);
        let r = g2(&o.0, t0, doublings, &grid(m.0, base, directions)?, &FunctionalSettings::default())?;
        put(out, r.value, "out")
    })
}

/// Eigenbasis up to degree `lambda_max` (sphere) or |k| ≤ `lambda_max` (torus).
///
/// # Safety
/// `model` is live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_spectrum_new(
    model: *const ZollModel,
    lambda_max: f64,
    out: *mut *mut ZollSpectrum,
) -> ZollStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let t = eigenbasis(&m.0, lambda_max)?;
        put(out, Box::into_raw(Box::new(ZollSpectrum(t))), "out")
    })
}

/// # Safety
/// `s` is null or came from [`zoll_spectrum_new`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn zoll_spectrum_free(s: *mut ZollSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Copies up to `cap` eigenvalues, repeated by multiplicity, into `buf` and
/// writes the total count to `len`. Pass `buf = NULL` to query the count.
///
/// # Safety
/// `s` is live; `buf` is null or holds `cap` doubles; `len` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_spectrum_eigenvalues(
    s: *const ZollSpectrum,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> ZollStatus {
    guard(|| {
        let v = deref(s, "spectrum")?.0.eigenvalues_with_multiplicity();
        if !buf.is_null() {
            std::slice::from_raw_parts_mut(buf, cap.min(v.len())).copy_from_slice(&v[..cap.min(v.len())]);
        }
        put(len, v.len(), "len")
    })
}

/// Smallest mass-matrix eigenvalue over the table for a function of the base point.
///
/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_g1(s: *const ZollSpectrum, weight: *const ZollObservable, out: *mut f64) -> ZollStatus {
    guard(|| {
        let r = g1(&deref(weight, "weight")?.0, &deref(s, "spectrum")?.0)?;
        put(out, r.value, "out")
    })
}

/// Smallest eigenvalue of the time-averaged Gramian at horizon `t`;
/// `t = INFINITY` gives the block-diagonal limit.
///
/// # Safety
/// Handles are live; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_observability_constant(
    s: *const ZollSpectrum,
    weight: *const ZollObservable,
    t: f64,
    out: *mut f64,
) -> ZollStatus {
    guard(|| {
        let base = GramianBase::new(&deref(s, "spectrum")?.0, &deref(weight, "weight")?.0, DEFAULT_BASIS_CAP)?;
        let h = if t == f64::INFINITY { Horizon::Infinity } else { Horizon::Finite(t) };
        put(out, observability_constant(&base.at(h)?)?, "out")
    })
}

/// Spectral Zoll test with default settings. Writes a `ZOLL_VERDICT_*` code,
/// and the fitted period and shift (NaN when no net was fitted).
///
/// # Safety
/// `values` holds `n` doubles; the out-pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_detect(
    values: *const f64,
    n: usize,
    verdict: *mut c_int,
    period: *mut f64,
    sigma: *mut f64,
) -> ZollStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let v = std::slice::from_raw_parts(values, n);
        let r = detect(v, "ffi", &DetectorSettings::default())?;
        let code = match r.verdict {
            Verdict::ZollConsistent => ZOLL_VERDICT_ZOLL,
            Verdict::Inconclusive => ZOLL_VERDICT_INCONCLUSIVE,
            Verdict::NotZollConsistent => ZOLL_VERDICT_NOT_ZOLL,
        };
        put(verdict, code, "verdict")?;
        put(period, r.net.as_ref().map_or(f64::NAN, |f| f.period), "period")?;
        put(sigma, r.net.as_ref().map_or(f64::NAN, |f| f.sigma), "sigma")
    })
}

/// Runs a named suite. `config` is configuration text (NULL for sphere
/// defaults); `out_dir` receives the artifacts (NULL writes nothing).
/// `pass` is set to 1 when every check passed, else 0.
///
/// # Safety
/// Strings are NUL-terminated or null where allowed; `pass` is writable.
#[no_mangle]
pub unsafe extern "C" fn zoll_run_suite(
    name: *const c_char,
    config: *const c_char,
    out_dir: *const c_char,
    pass: *mut c_int,
) -> ZollStatus {
    guard(|| {
        let name = text(name, "name")?;
        let cfg = if config.is_null() {
            ExperimentConfig::defaults("sphere")?
        } else {
            ExperimentConfig::parse(text(config, "config")?)?
        };
        let dir = if out_dir.is_null() { None } else { Some(Path::new(text(out_dir, "out_dir")?)) };
        let r = run_suite(name, &cfg, dir)?;
        put(pass, c_int::from(r.pass), "pass")
    })
}
