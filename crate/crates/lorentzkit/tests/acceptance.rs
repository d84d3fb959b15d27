//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::Instant;

use lorentzkit::catalog::{kerr_bl, KerrParameters};
use lorentzkit::cli::{quotient_samples, run, Command, Report, RunConfig};
use lorentzkit::tensor::curvature_at;

fn cfg(cmd: Command) -> RunConfig {
    RunConfig { command: Some(cmd), ..RunConfig::default() }
}

fn report(c: RunConfig) -> Report {
    run(&c).unwrap_or_else(|e| panic!("{c:?}: {e}"))
}

/// Named checks must exist and pass; returns a short summary.
fn require(r: &Report, names: &[&str], out: &mut Vec<String>) -> bool {
    let mut ok = true;
    for n in names {
        match r.check(n) {
            Some(c) => {
                out.push(format!("{n}={:.3e}", c.value));
                ok &= c.passed;
            }
            None => {
                out.push(format!("{n}=missing"));
                ok = false;
            }
        }
    }
    ok
}

/// R_abcd R^abcd from all-lower components and the inverse metric.
fn kretschmann(r: &[f64], gi: &[f64]) -> f64 {
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * 4 + b) * 4 + c) * 4 + d;
    let mut up = vec![0.0; 256];
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let mut s = 0.0;
                    for e in 0..4 {
                        for f in 0..4 {
                            for g in 0..4 {
                                for h in 0..4 {
                                    s += gi[a * 4 + e] * gi[b * 4 + f] * gi[c * 4 + g] * gi[d * 4 + h] * r[idx(e, f, g, h)];
                                }
                            }
                        }
                    }
                    up[idx(a, b, c, d)] = s;
                }
            }
        }
    }
    r.iter().zip(&up).map(|(x, y)| x * y).sum()
}

fn c1() -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for metric in ["kerr_bl", "kerr_ingoing"] {
        for a in [0.0, 0.5, 0.9] {
            let r = report(RunConfig { metric: Some(metric.into()), a, grid: 6, ..cfg(Command::Verify) });
            let c = r.check("ricci_relative").expect("ricci check");
            ok &= c.passed && c.stats.as_ref().map(|s| s.count) == Some(216);
            notes.push(format!("{metric}/a={a}:{:.1e}", c.value));
        }
    }
    // Curvature is not trivially zero: Schwarzschild Kretschmann scalar 48m²/r⁶.
    let m = kerr_bl(1.0, 0.0).unwrap();
    for r in [3.0, 5.5] {
        let b = curvature_at(&m, &[0.0, r, 1.0, 0.4], 2).unwrap();
        let k = kretschmann(&b.riemann_tensor().data, &b.g_inv_val());
        let want = 48.0 / r.powi(6);
        ok &= ((k - want) / want).abs() < 1e-9;
    }
    (ok, notes.join(" "))
}

fn c2() -> (bool, String) {
    let r = report(RunConfig { suite: Some("quotient".into()), samples: 200, ..cfg(Command::Verify) });
    let mut notes = Vec::new();
    let mut ok = require(
        &r,
        &[
            "quotient_ricci_closed_form",
            "wave_operators_closed_form",
            "potentials_and_gradients_closed_form",
            "curl_closed_form",
            "curl_identity",
        ],
        &mut notes,
    );
    ok &= r.config.tol == Some(1e-8);
    // Potentials from g(∂_u, ∂_u) and the twist of ingoing Kerr, written out here.
    let q = lorentzkit::catalog::kerr_quotient(1.0, 0.5).unwrap();
    let p = KerrParameters::new(1.0, 0.5).unwrap();
    for x in quotient_samples(p, 200, 7) {
        let (th, rr) = (x[0], x[1]);
        let q2 = rr * rr + 0.25 * th.cos().powi(2);
        let (xv, yv) = (2.0 * rr / q2 - 1.0, -2.0 * 0.5 * th.cos() / q2);
        ok &= (q.x.eval(&x) - xv).abs() <= 1e-12 * xv.abs().max(1.0);
        ok &= (q.y.eval(&x) - yv).abs() <= 1e-12;
    }
    (ok, notes.join(" "))
}

fn c3() -> (bool, String) {
    let r = report(RunConfig { suite: Some("ernst".into()), samples: 200, ..cfg(Command::Verify) });
    let mut notes = Vec::new();
    let mut ok = require(&r, &["ernst_ricci", "ernst_wave_x", "ernst_wave_y", "assembled_metric_round_trip"], &mut notes);
    ok &= r.config.tol == Some(1e-8) && r.check("assembled_metric_round_trip").unwrap().max == Some(1e-10);
    (ok, notes.join(" "))
}

fn extend(field: &str) -> Report {
    report(RunConfig { field: Some(field.into()), step: Some(1e-3), ..cfg(Command::Extend) })
}

fn c4(t: &Report, z: &Report) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for r in [t, z] {
        ok &= r.config.step == Some(1e-3) && r.config.tol == Some(1e-6);
        ok &= require(r, &["sup_deformation", "convergence_ratio_1", "convergence_ratio_2"], &mut notes);
    }
    (ok, notes.join(" "))
}

fn c5(t: &Report, p: &Report) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for r in [t, p] {
        ok &= require(
            r,
            &[
                "transport_identities",
                "transport_identities_half_step",
                "divergence_identity",
                "divergence_identity_half_step",
                "weyl_symmetries",
                "weyl_symmetries_half_step",
            ],
            &mut notes,
        );
    }
    (ok, notes.join(" "))
}

fn c6() -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for (f, checks) in [
        ("null_plane", &["verdict", "witness_nullity", "witness_tangency", "witness_hessian"][..]),
        ("spacelike_plane", &["verdict", "gradient_margin", "form_margin_min"][..]),
        ("double_null", &["verdict", "gradient_margin", "form_margin_min", "neighborhood_radius"][..]),
    ] {
        let r = report(RunConfig { function: Some(f.into()), ..cfg(Command::Pseudoconvex) });
        ok &= r.config.directions >= 100_000;
        notes.push(format!("{f}:"));
        ok &= require(&r, checks, &mut notes);
    }
    (ok, notes.join(" "))
}

fn c7(z: &Report, p: &Report) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = require(z, &["cascade_all_blocks"], &mut notes);
    ok &= require(p, &["cascade_first_failing_signature"], &mut notes);
    let flat = report(RunConfig { metric: Some("minkowski".into()), ..cfg(Command::Extend) });
    ok &= require(&flat, &["cascade_all_blocks", "sup_deformation"], &mut notes);
    (ok, notes.join(" "))
}

fn c8(r: &Report, secs: f64) -> (bool, String) {
    let mut notes = Vec::new();
    let ok = require(r, &["phi_ratio_1", "phi_ratio_2", "coefficient_bound_ratio"], &mut notes);
    notes.push(format!("{secs:.1}s"));
    (ok && secs <= 300.0, notes.join(" "))
}

fn c9(r: &Report) -> (bool, String) {
    let mut notes = Vec::new();
    let ok = require(
        r,
        &["raychaudhuri", "bump_obstructed", "bump_witness_residual", "unperturbed_consistent", "unperturbed_residual"],
        &mut notes,
    );
    (ok, notes.join(" "))
}

fn c10() -> (bool, String) {
    let runs = [
        RunConfig { suite: Some("ernst".into()), seed: 11, ..cfg(Command::Verify) },
        RunConfig { function: Some("double_null".into()), seed: 3, ..cfg(Command::Pseudoconvex) },
        RunConfig { field: Some("perturbed".into()), step: Some(1e-2), ..cfg(Command::Extend) },
    ];
    let ok = runs.iter().all(|c| report(c.clone()).to_json() == report(c.clone()).to_json());
    (ok, format!("{} configurations", runs.len()))
}

fn main() {
    let t = extend("T");
    let z = extend("Z_phi");
    let p = extend("perturbed");
    let t0 = Instant::now();
    let obstruction = report(cfg(Command::Obstruction));
    let secs = t0.elapsed().as_secs_f64();

    let results = [
        ("1 vacuum check", c1()),
        ("2 quotient closed forms", c2()),
        ("3 Ernst system and assembly", c3()),
        ("4 Killing extension", c4(&t, &z)),
        ("5 transport and divergence identities", c5(&t, &p)),
        ("6 pseudo-convexity", c6()),
        ("7 signature cascade", c7(&z, &p)),
        ("8 obstruction sweep", c8(&obstruction, secs)),
        ("9 characteristic data", c9(&obstruction)),
        ("10 determinism", c10()),
    ];
    let mut failed = 0;
    for (name, (ok, note)) in &results {
        println!("{} criterion {name}: {note}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
