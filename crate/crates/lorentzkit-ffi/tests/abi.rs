use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use lorentzkit_ffi::*;

fn kerr(chart: i32) -> *mut LkMetric {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lk_metric_kerr(1.0, 0.5, chart, &mut h) }, LK_OK);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    assert_eq!(unsafe { lk_last_error(buf.as_mut_ptr(), buf.len()) }, LK_OK);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn kerr_is_vacuum_through_the_abi() {
    for (chart, x) in [(LK_CHART_BOYER_LINDQUIST, [0.0, 3.0, 1.2, 0.4]), (LK_CHART_INGOING, [1.1, 1.3, 0.4, 0.0])] {
        let h = kerr(chart);
        let (mut ric, mut riem) = (f64::NAN, f64::NAN);
        assert_eq!(unsafe { lk_ricci_residual(h, x.as_ptr(), 4, &mut ric, &mut riem) }, LK_OK);
        assert!(riem > 1e-3 && ric <= 1e-9 * riem, "{ric} {riem}");
        unsafe { lk_metric_free(h) };
    }
}

#[test]
fn components_match_the_library() {
    let h = kerr(LK_CHART_BOYER_LINDQUIST);
    let x = [0.0, 3.0, 1.2, 0.4];
    let mut g = [0.0; 16];
    assert_eq!(unsafe { lk_metric_components(h, x.as_ptr(), 4, g.as_mut_ptr()) }, LK_OK);
    let want = lorentzkit::catalog::kerr_bl(1.0, 0.5).unwrap().metric_at(&x).unwrap();
    assert_eq!(g.to_vec(), want);
    // Boyer–Lindquist g_tt = −(1 − 2mr/Σ²) with Σ² = r² + a²cos²θ.
    let s2 = 9.0 + 0.25 * 1.2f64.cos().powi(2);
    assert!((g[0] + 1.0 - 6.0 / s2).abs() < 1e-14);
    unsafe { lk_metric_free(h) };
}

#[test]
fn error_codes() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lk_metric_kerr(1.0, 1.5, LK_CHART_INGOING, &mut h) }, LK_INVALID_ARGUMENT);
    assert!(h.is_null());
    assert!(last_error().contains("0 <= a < m"));
    assert_eq!(unsafe { lk_metric_kerr(1.0, 0.5, 7, &mut h) }, LK_INVALID_ARGUMENT);
    assert_eq!(unsafe { lk_metric_kerr(1.0, 0.5, 0, ptr::null_mut()) }, LK_NULL_POINTER);

    let k = kerr(LK_CHART_BOYER_LINDQUIST);
    let mut g = [0.0; 16];
    let horizon = [0.0, 1.5, 1.0, 0.0];
    assert_eq!(unsafe { lk_metric_components(k, horizon.as_ptr(), 4, g.as_mut_ptr()) }, LK_DOMAIN);
    assert_eq!(unsafe { lk_metric_components(k, horizon.as_ptr(), 3, g.as_mut_ptr()) }, LK_INVALID_ARGUMENT);
    let mut small = [0 as std::ffi::c_char; 8];
    assert_eq!(unsafe { lk_metric_hash(k, small.as_mut_ptr(), small.len()) }, LK_BUFFER_TOO_SMALL);
    unsafe { lk_metric_free(k) };
    unsafe { lk_metric_free(ptr::null_mut()) };
    unsafe { lk_report_free(ptr::null_mut()) };
}

#[test]
fn hash_matches_the_library() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { lk_metric_minkowski(&mut h) }, LK_OK);
    let mut buf = [0 as std::ffi::c_char; 65];
    assert_eq!(unsafe { lk_metric_hash(h, buf.as_mut_ptr(), buf.len()) }, LK_OK);
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    let want = lorentzkit::catalog::minkowski(lorentzkit::catalog::MinkowskiChart::Cartesian).hash();
    assert_eq!(s, want);
    let mut n = 0usize;
    assert_eq!(unsafe { lk_metric_dim(h, &mut n) }, LK_OK);
    assert_eq!(n, 4);
    unsafe { lk_metric_free(h) };
}

#[test]
fn run_returns_the_cli_report() {
    let cfg = CString::new("command = \"verify\"\nmetric = \"minkowski\"\ngrid = 2\n").unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { lk_run(cfg.as_ptr(), &mut r) }, LK_OK);
    let mut passed = 0;
    assert_eq!(unsafe { lk_report_passed(r, &mut passed) }, LK_OK);
    assert_eq!(passed, 1);
    let json = unsafe { CStr::from_ptr(lk_report_json(r)) }.to_str().unwrap().to_owned();
    unsafe { lk_report_free(r) };
    let rc: lorentzkit::cli::RunConfig = toml::from_str(cfg.to_str().unwrap()).unwrap();
    assert_eq!(json, lorentzkit::cli::run(&rc).unwrap().to_json());

    let bad = CString::new("command = \"verify\"\nsuite = \"nope\"\n").unwrap();
    assert_eq!(unsafe { lk_run(bad.as_ptr(), &mut r) }, LK_INVALID_ARGUMENT);
    let bad = CString::new("unknown_key = 1\n").unwrap();
    assert_eq!(unsafe { lk_run(bad.as_ptr(), &mut r) }, LK_INVALID_ARGUMENT);
}

#[test]
fn obstruction_phi_scales_like_inverse_eps() {
    let run = |eps: f64| {
        let (mut phi, mut blow) = (0.0, -1);
        let th = std::f64::consts::FRAC_PI_3;
        assert_eq!(unsafe { lk_obstruction_phi(1.0, 0.5, th, eps, &mut phi, &mut blow) }, LK_OK);
        assert_eq!(blow, 0);
        phi
    };
    let ratio = run(0.05) / run(0.1);
    assert!((1.4..=2.6).contains(&ratio), "{ratio}");
}

#[test]
fn header_declares_every_function() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/lorentzkit.h")).unwrap();
    for f in [
        "lk_metric_kerr",
        "lk_metric_minkowski",
        "lk_metric_free",
        "lk_metric_dim",
        "lk_metric_components",
        "lk_ricci_residual",
        "lk_metric_hash",
        "lk_obstruction_phi",
        "lk_run",
        "lk_report_passed",
        "lk_report_json",
        "lk_report_free",
        "lk_last_error",
        "typedef struct LkMetric LkMetric",
    ] {
        assert!(header.contains(f), "{f}");
    }
}

/// Compiles tests/smoke.c against the header and the static library when a C compiler is present.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| {
        std::process::Command::new(c).arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
    }) else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liblorentzkit_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = std::env::temp_dir().join(format!("lorentzkit-smoke-{}", std::process::id()));
    let st = std::process::Command::new(cc)
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success(), "C compilation failed");
    let run = std::process::Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
