//! C ABI over lorentzkit.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free`. Every function returns an `i32` status code (`LK_OK`
//! on success) and writes results through out-pointers. After a failure,
//! `lk_last_error` copies a message describing it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lorentzkit::catalog::{kerr_bl, kerr_ingoing, minkowski, MetricDescriptor, MinkowskiChart};
use lorentzkit::cli::{run, RunConfig};
use lorentzkit::error::GeoError;
use lorentzkit::reduction::{obstruction_experiment, ObstructionSetup};
use lorentzkit::tensor::curvature_at;

pub const LK_OK: i32 = 0;
pub const LK_NULL_POINTER: i32 = -1;
pub const LK_INVALID_ARGUMENT: i32 = -2;
/// Point outside the chart domain or singular there.
pub const LK_DOMAIN: i32 = -3;
/// Numerical failure: blow-up, caustic, singular matrix, too few samples.
pub const LK_NUMERICAL: i32 = -4;
pub const LK_BUFFER_TOO_SMALL: i32 = -5;
pub const LK_PANIC: i32 = -6;

pub const LK_CHART_BOYER_LINDQUIST: i32 = 0;
pub const LK_CHART_INGOING: i32 = 1;

/// A metric in a fixed chart.
pub struct LkMetric {
    inner: MetricDescriptor,
}

/// A finished run: its JSON report and verdict.
pub struct LkReport {
    json: CString,
    passed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(code: i32, msg: impl Into<String>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    code
}

fn code_of(e: &GeoError) -> i32 {
    match e {
        GeoError::Parameter(_) | GeoError::Input(_) | GeoError::Precondition(_) => LK_INVALID_ARGUMENT,
        GeoError::SingularChart { .. } | GeoError::DomainExit { .. } => LK_DOMAIN,
        _ => LK_NUMERICAL,
    }
}

fn guard<F: FnOnce() -> Result<(), GeoError>>(f: F) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LK_OK,
        Ok(Err(e)) => fail(code_of(&e), e.to_string()),
        Err(_) => fail(LK_PANIC, "internal panic"),
    }
}

unsafe fn point<'a>(x: *const f64, n: usize, dim: usize) -> Result<&'a [f64], i32> {
    if x.is_null() {
        return Err(fail(LK_NULL_POINTER, "null point"));
    }
    if n != dim {
        return Err(fail(LK_INVALID_ARGUMENT, format!("point has {n} coordinates, metric needs {dim}")));
    }
    Ok(std::slice::from_raw_parts(x, n))
}

fn give_metric(m: MetricDescriptor, out: *mut *mut LkMetric) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(LkMetric { inner: m })) };
}

/// Kerr with mass `m` and spin `a` (0 <= a < m) in Boyer–Lindquist or ingoing coordinates.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_kerr(m: f64, a: f64, chart: i32, out: *mut *mut LkMetric) -> i32 {
    if out.is_null() {
        return fail(LK_NULL_POINTER, "null out pointer");
    }
    let mk = match chart {
        LK_CHART_BOYER_LINDQUIST => kerr_bl,
        LK_CHART_INGOING => kerr_ingoing,
        _ => return fail(LK_INVALID_ARGUMENT, format!("unknown chart {chart}")),
    };
    guard(|| {
        give_metric(mk(m, a)?, out);
        Ok(())
    })
}

/// Minkowski space in Cartesian coordinates (t, x, y, z).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_minkowski(out: *mut *mut LkMetric) -> i32 {
    if out.is_null() {
        return fail(LK_NULL_POINTER, "null out pointer");
    }
    guard(|| {
        give_metric(minkowski(MinkowskiChart::Cartesian), out);
        Ok(())
    })
}

/// Releases a metric handle. Null is ignored.
///
/// # Safety
/// `h` must come from an `lk_metric_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_free(h: *mut LkMetric) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of coordinates.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_dim(h: *const LkMetric, out: *mut usize) -> i32 {
    if h.is_null() || out.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    *out = (*h).inner.dim();
    LK_OK
}

/// Row-major components g_ab at `x` (`n` coordinates) into `g`, which holds n² values.
///
/// # Safety
/// `x` must point to `n` readable values and `g` to `n * n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_components(h: *const LkMetric, x: *const f64, n: usize, g: *mut f64) -> i32 {
    if h.is_null() || g.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    let m = &(*h).inner;
    let x = match point(x, n, m.dim()) {
        Ok(x) => x,
        Err(c) => return c,
    };
    guard(|| {
        let v = m.metric_at(x)?;
        std::slice::from_raw_parts_mut(g, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// max|Ric| and max|Riemann| (all indices down) at `x`.
///
/// # Safety
/// `x` must point to `n` readable values; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_ricci_residual(
    h: *const LkMetric,
    x: *const f64,
    n: usize,
    ricci_max: *mut f64,
    riemann_max: *mut f64,
) -> i32 {
    if h.is_null() || ricci_max.is_null() || riemann_max.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    let m = &(*h).inner;
    let x = match point(x, n, m.dim()) {
        Ok(x) => x,
        Err(c) => return c,
    };
    guard(|| {
        let b = curvature_at(m, x, 2)?;
        *ricci_max = b.ricci_tensor().max_abs();
        *riemann_max = b.riemann_tensor().max_abs();
        Ok(())
    })
}

/// Copies the hex SHA-256 of the component expressions (64 characters plus NUL).
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lk_metric_hash(h: *const LkMetric, buf: *mut c_char, len: usize) -> i32 {
    if h.is_null() || buf.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    copy_str(&(*h).inner.hash(), buf, len)
}

unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> i32 {
    let bytes = s.as_bytes();
    if len < bytes.len() + 1 {
        return fail(LK_BUFFER_TOO_SMALL, format!("need {} bytes", bytes.len() + 1));
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    LK_OK
}

/// Φ at p′ for one ε of the obstruction experiment at θ₀ on Kerr(m, a).
/// `blowup` is set to 1 when the frame system blew up before p′.
///
/// # Safety
/// The out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn lk_obstruction_phi(
    m: f64,
    a: f64,
    theta0: f64,
    eps: f64,
    phi: *mut f64,
    blowup: *mut i32,
) -> i32 {
    if phi.is_null() || blowup.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    guard(|| {
        let setup = ObstructionSetup { m, a, theta0, ..ObstructionSetup::default() };
        let r = obstruction_experiment(&setup, eps)?;
        *phi = r.phi;
        *blowup = i32::from(r.blowup);
        Ok(())
    })
}

/// Runs a command described by a TOML run configuration (the same keys as
/// the command-line config file) and returns its report.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lk_run(config: *const c_char, out: *mut *mut LkReport) -> i32 {
    if config.is_null() || out.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    let text = match CStr::from_ptr(config).to_str() {
        Ok(t) => t,
        Err(_) => return fail(LK_INVALID_ARGUMENT, "config is not UTF-8"),
    };
    guard(|| {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| GeoError::Input(format!("config: {e}")))?;
        let r = run(&cfg)?;
        let json = CString::new(r.to_json()).map_err(|e| GeoError::Input(e.to_string()))?;
        *out = Box::into_raw(Box::new(LkReport { json, passed: r.passed }));
        Ok(())
    })
}

/// 1 when every check of the report passed, 0 otherwise.
///
/// # Safety
/// `r` must be a live report handle and `passed` writable.
#[no_mangle]
pub unsafe extern "C" fn lk_report_passed(r: *const LkReport, passed: *mut i32) -> i32 {
    if r.is_null() || passed.is_null() {
        return fail(LK_NULL_POINTER, "null argument");
    }
    *passed = i32::from((*r).passed);
    LK_OK
}

/// The report as JSON. The string is owned by the report and lives until `lk_report_free`.
///
/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn lk_report_json(r: *const LkReport) -> *const c_char {
    if r.is_null() {
        return std::ptr::null();
    }
    (*r).json.as_ptr()
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `r` must come from `lk_run` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lk_report_free(r: *mut LkReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Copies the message of the last failure on this thread (empty if none).
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lk_last_error(buf: *mut c_char, len: usize) -> i32 {
    if buf.is_null() {
        return LK_NULL_POINTER;
    }
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    copy_str(&msg, buf, len)
}
