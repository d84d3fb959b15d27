//! Batch front-end: named verification suites and experiments, each producing
//! a deterministic JSON [`Report`].

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::catalog::{
    kerr_bl, kerr_ingoing, kerr_quotient, minkowski, KerrParameters, MetricDescriptor, MinkowskiChart,
};
use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::killext::{
    extend_vector, setups, signature_cascade, transport_residuals, weyl_battery, Congruence, ExtendedGeodesic,
    ExtensionConfig, Seed, SeedMode,
};
use crate::nullchar::{
    bump, certificate_with_refinement, check_constraints, solve_phi, CertificateConfig, ConformalData,
    Extendibility, PhiConfig,
};
use crate::pconvex::{
    check_pseudoconvexity, double_null_product, point_data, quantitative_margin, verify_neighborhood,
    DefiningFunction, SearchConfig, Verdict,
};
use crate::reduction::{
    assemble_spacetime, closed_forms, obstruction_sweep, quotient_point, verify_ernst_system, write_sweep_csv,
    ObstructionSetup, ReducedData,
};
use crate::report::{max_abs, ResidualStats, SCHEMA_VERSION};
use crate::tensor::curvature_at;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Verify,
    Extend,
    Pseudoconvex,
    Obstruction,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path; stdout when absent.
    pub json: Option<PathBuf>,
    /// CSV table path for commands that produce one.
    pub csv: Option<PathBuf>,
    /// Adds wall-clock seconds to the report, which then is no longer reproducible.
    pub timing: bool,
}

/// Everything a run depends on. Unset options are filled per command by
/// [`RunConfig::resolve`], and the resolved config is echoed in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub metric: Option<String>,
    pub m: f64,
    pub a: f64,
    pub suite: Option<String>,
    /// Points per axis of the curvature grid.
    pub grid: usize,
    /// Seeded random samples for the quotient suites.
    pub samples: usize,
    pub jet_order: usize,
    pub step: Option<f64>,
    pub span: Option<f64>,
    pub tol: Option<f64>,
    pub seed: u64,
    /// Seed field for `extend`: T, Z (alias Z_phi), rotation or perturbed.
    pub field: Option<String>,
    /// Defining function for `pseudoconvex`: null_plane, spacelike_plane or double_null.
    pub function: Option<String>,
    /// Expected pseudo-convexity verdict.
    pub expect: Option<String>,
    /// ε values of the obstruction sweep.
    pub eps: Vec<f64>,
    pub theta0: f64,
    /// Random directions used to re-verify certificate inequalities.
    pub directions: usize,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            metric: None,
            m: 1.0,
            a: 0.5,
            suite: None,
            grid: 6,
            samples: 200,
            jet_order: 2,
            step: None,
            span: None,
            tol: None,
            seed: 7,
            field: None,
            function: None,
            expect: None,
            eps: vec![0.1, 0.05, 0.025],
            theta0: PI / 3.0,
            directions: 100_000,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lorentzkit", version, about = "Numerical checks of Lorentzian geometry constructions")]
pub struct Cli {
    /// verify, extend, pseudoconvex or obstruction; may come from --config instead.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub jet_order: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub function: Option<String>,
    #[arg(long)]
    pub expect: Option<String>,
    /// Comma-separated ε sweep.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub directions: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub timing: bool,
}

impl Cli {
    /// Reads the config file, if any, and applies the flags on top.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| GeoError::Input(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<RunConfig>(&text).map_err(|e| GeoError::Input(format!("config: {e}")))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { c.$f = v.clone().into(); })*};
        }
        set!(command, metric, suite, step, span, tol, field, function, expect);
        macro_rules! set_plain {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { c.$f = v; })*};
        }
        set_plain!(m, a, grid, samples, jet_order, seed, theta0, directions);
        if let Some(e) = &self.eps {
            c.eps = e.clone();
        }
        if self.out.is_some() {
            c.output.json = self.out.clone();
        }
        if self.csv.is_some() {
            c.output.csv = self.csv.clone();
        }
        c.output.timing |= self.timing;
        Ok(c)
    }
}

impl RunConfig {
    /// Fills command-dependent defaults and validates.
    pub fn resolve(mut self) -> Result<RunConfig> {
        let cmd = self.command.ok_or_else(|| GeoError::Input("no command given".into()))?;
        match cmd {
            Command::Verify => {
                let suite = self.suite.get_or_insert_with(|| "curvature".into()).clone();
                let metric = match suite.as_str() {
                    "ernst" | "quotient" => "kerr_quotient",
                    _ => "kerr_bl",
                };
                self.metric.get_or_insert_with(|| metric.into());
                let tol = match (suite.as_str(), self.metric.as_deref()) {
                    ("curvature", Some("minkowski")) => 1e-13,
                    ("curvature", _) => 1e-9,
                    _ => 1e-8,
                };
                self.tol.get_or_insert(tol);
            }
            Command::Extend => {
                let metric = self.metric.get_or_insert_with(|| "kerr_ingoing".into()).clone();
                let flat = metric == "minkowski";
                self.field.get_or_insert_with(|| if flat { "rotation" } else { "T" }.into());
                self.step.get_or_insert(1e-3);
                self.span.get_or_insert(0.05);
                self.tol.get_or_insert(if flat { 1e-9 } else { 1e-6 });
            }
            Command::Pseudoconvex => {
                let f = self.function.get_or_insert_with(|| "null_plane".into()).clone();
                self.metric.get_or_insert_with(|| "minkowski".into());
                let expect = if f == "null_plane" { "refuted" } else { "certified" };
                self.expect.get_or_insert_with(|| expect.into());
                self.tol.get_or_insert(1e-10);
            }
            Command::Obstruction => {
                self.metric.get_or_insert_with(|| "kerr_quotient".into());
                self.step.get_or_insert(1e-4);
                self.tol.get_or_insert(1e-8);
            }
        }
        let tol = self.tol.unwrap_or(0.0);
        if !(tol > 0.0) {
            return Err(GeoError::Input(format!("tolerance must be positive, got {tol}")));
        }
        for (name, v) in [("step", self.step), ("span", self.span)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(GeoError::Input(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.grid == 0 || self.samples == 0 {
            return Err(GeoError::Input("grid and samples must be positive".into()));
        }
        Ok(self)
    }

    fn tol(&self) -> f64 {
        self.tol.expect("resolved config")
    }
}

/// One pass/fail line of a report. `value` passes when it lies in [min, max].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<ResidualStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn at_most(name: &str, value: f64, max: f64) -> Self {
        Check {
            name: name.into(),
            value,
            min: None,
            max: Some(max),
            passed: value <= max,
            stats: None,
            note: None,
        }
    }

    pub fn at_least(name: &str, value: f64, min: f64) -> Self {
        Check {
            name: name.into(),
            value,
            min: Some(min),
            max: None,
            passed: value >= min,
            stats: None,
            note: None,
        }
    }

    pub fn within(name: &str, value: f64, min: f64, max: f64) -> Self {
        Check {
            name: name.into(),
            value,
            min: Some(min),
            max: Some(max),
            passed: (min..=max).contains(&value),
            stats: None,
            note: None,
        }
    }

    /// A yes/no outcome stored as value 1 or 0 against min 1.
    pub fn holds(name: &str, ok: bool, note: impl Into<String>) -> Self {
        let mut c = Check::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0);
        c.note = Some(note.into());
        c
    }

    pub fn stats(name: &str, s: ResidualStats, max: f64) -> Self {
        let mut c = Check::at_most(name, s.max, max);
        c.passed = s.within(max);
        c.stats = Some(s);
        c
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.note = Some(n.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricInfo {
    pub name: String,
    pub params: Vec<(String, f64)>,
    /// SHA-256 of the canonical component expressions.
    pub hash: String,
}

impl From<&MetricDescriptor> for MetricInfo {
    fn from(m: &MetricDescriptor) -> Self {
        MetricInfo { name: m.name.clone(), params: m.params.clone(), hash: m.hash() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub tool_version: &'static str,
    pub command: Command,
    pub config: RunConfig,
    pub seed: u64,
    pub metrics: Vec<MetricInfo>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

struct Outcome {
    metrics: Vec<MetricInfo>,
    checks: Vec<Check>,
    details: Value,
}

/// Runs the configured command. Output files are written by [`execute`].
pub fn run(config: &RunConfig) -> Result<Report> {
    let cfg = config.clone().resolve()?;
    let t0 = Instant::now();
    let cmd = cfg.command.expect("resolved");
    let out = match cmd {
        Command::Verify => cmd_verify(&cfg)?,
        Command::Extend => cmd_extend(&cfg)?,
        Command::Pseudoconvex => cmd_pseudoconvex(&cfg)?,
        Command::Obstruction => cmd_obstruction(&cfg)?,
    };
    let passed = !out.checks.is_empty() && out.checks.iter().all(|c| c.passed);
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command: cmd,
        seed: cfg.seed,
        metrics: out.metrics,
        checks: out.checks,
        passed,
        details: out.details,
        wall_clock_s: cfg.output.timing.then(|| t0.elapsed().as_secs_f64()),
        config: cfg,
    })
}

/// Runs and writes the JSON report (and CSV where applicable). Returns the
/// report; the process exit code should be 0 only when `report.passed`.
pub fn execute(config: &RunConfig) -> Result<Report> {
    let report = run(config)?;
    let io = |p: &PathBuf, e: std::io::Error| GeoError::Input(format!("cannot write {}: {e}", p.display()));
    if report.command == Command::Obstruction {
        if let Some(p) = &report.config.output.csv {
            let mut setup = obstruction_setup(&report.config);
            setup.max_step = report.config.step.expect("resolved");
            let sweep = obstruction_sweep(&setup, &report.config.eps)?;
            let f = std::fs::File::create(p).map_err(|e| io(p, e))?;
            write_sweep_csv(&sweep, f)?;
        }
    }
    match &report.config.output.json {
        Some(p) => std::fs::write(p, report.to_json()).map_err(|e| io(p, e))?,
        None => print!("{}", report.to_json()),
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// verify

fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (hi - lo) * (i as f64 + 0.5) / n as f64
}

/// n³ cell-centred interior grid of the named chart.
pub fn curvature_grid(name: &str, m: f64, a: f64, n: usize) -> Result<(MetricDescriptor, Vec<Vec<f64>>)> {
    let mut pts = Vec::with_capacity(n * n * n);
    let metric = match name {
        "kerr_bl" | "schwarzschild" => {
            let p = KerrParameters::new(m, a)?;
            let rp = p.r_plus();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let r = axis(rp + 0.5 * m, rp + 4.5 * m, n, i);
                        pts.push(vec![0.3, r, axis(0.3, PI - 0.3, n, j), axis(0.0, 2.0 * PI, n, k)]);
                    }
                }
            }
            kerr_bl(m, a)?
        }
        "kerr_ingoing" => {
            KerrParameters::new(m, a)?;
            for i in 0..n {
                let th = axis(0.3, PI - 0.3, n, i);
                // 2mr − q² > 0 between m ± (m² − a²cos²θ)^{1/2}.
                let disc = (m * m - a * a * th.cos().powi(2)).sqrt();
                for j in 0..n {
                    for k in 0..n {
                        let r = axis(m - 0.9 * disc, m + 0.9 * disc, n, j);
                        pts.push(vec![th, r, axis(0.0, 2.0 * PI, n, k), 0.2]);
                    }
                }
            }
            kerr_ingoing(m, a)?
        }
        "minkowski" => {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        pts.push(vec![0.0, axis(-1.0, 1.0, n, i), axis(-1.0, 1.0, n, j), axis(-1.0, 1.0, n, k)]);
                    }
                }
            }
            minkowski(MinkowskiChart::Cartesian)
        }
        other => return Err(GeoError::Input(format!("unknown metric {other:?} for the curvature grid"))),
    };
    pts.retain(|x| metric.domain.contains(x));
    if pts.is_empty() {
        return Err(GeoError::Input(format!("no grid point of {name} lies in its domain")));
    }
    Ok((metric, pts))
}

/// Seeded (θ, r, φ₋) samples of the Kerr quotient away from the ergo surface
/// and the horizon.
pub fn quotient_samples(p: KerrParameters, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 1e-2;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let th = rng.gen_range(0.15..PI - 0.15);
        let disc = (p.m * p.m - p.a * p.a * th.cos().powi(2)).sqrt();
        let r = rng.gen_range(p.m - disc + margin..p.m + disc - margin);
        let ph = rng.gen_range(0.0..2.0 * PI);
        if p.delta(r).abs() > margin {
            out.push(vec![th, r, ph]);
        }
    }
    out
}

fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let suite = cfg.suite.as_deref().expect("resolved");
    let metric = cfg.metric.as_deref().expect("resolved");
    match suite {
        "curvature" | "weyl" => curvature_suite(cfg, metric, suite == "weyl"),
        "ernst" | "quotient" => {
            if metric != "kerr_quotient" {
                return Err(GeoError::Input(format!("suite {suite} needs metric kerr_quotient, got {metric}")));
            }
            if suite == "ernst" {
                ernst_suite(cfg)
            } else {
                quotient_suite(cfg)
            }
        }
        other => Err(GeoError::Input(format!("unknown suite {other:?}"))),
    }
}

fn curvature_suite(cfg: &RunConfig, name: &str, weyl: bool) -> Result<Outcome> {
    let (metric, pts) = curvature_grid(name, cfg.m, cfg.a, cfg.grid)?;
    let order = cfg.jet_order.max(2);
    let flat = name == "minkowski";
    let rows: Vec<(f64, f64, f64, f64)> = pts
        .par_iter()
        .map(|x| {
            let b = curvature_at(&metric, x, order)?;
            let riem = b.riemann_tensor();
            let wb = weyl_battery(&riem, &b.metric_inverse());
            Ok((b.ricci_tensor().max_abs(), riem.max_abs(), wb.worst(), wb.scale))
        })
        .collect::<Result<_>>()?;
    let tol = cfg.tol();
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    details.insert("points".into(), json!(pts.len()));
    details.insert("jet_order".into(), json!(order));
    if weyl {
        let s: ResidualStats = rows.iter().zip(&pts).map(|(r, x)| (r.2 / r.3.max(1e-300), x.clone())).collect();
        checks.push(Check::stats("riemann_symmetry_battery", s, tol).note("relative to max|Riemann| per point"));
    } else if flat {
        let ric: ResidualStats = rows.iter().zip(&pts).map(|(r, x)| (r.0, x.clone())).collect();
        let riem: ResidualStats = rows.iter().zip(&pts).map(|(r, x)| (r.1, x.clone())).collect();
        checks.push(Check::stats("ricci_abs", ric, tol));
        checks.push(Check::stats("riemann_abs", riem, tol));
    } else {
        let ric: ResidualStats = rows.iter().zip(&pts).map(|(r, x)| (r.0 / r.1, x.clone())).collect();
        let riem_max = rows.iter().fold(0.0f64, |m, r| m.max(r.1));
        details.insert("max_riemann".into(), json!(riem_max));
        checks.push(Check::stats("ricci_relative", ric, tol).note("max|Ric| / max|Riemann| per point"));
    }
    Ok(Outcome { metrics: vec![MetricInfo::from(&metric)], checks, details: Value::Object(details) })
}

fn ernst_suite(cfg: &RunConfig) -> Result<Outcome> {
    let q = kerr_quotient(cfg.m, cfg.a)?;
    let data = ReducedData::from(&q);
    let samples = quotient_samples(q.params, cfg.samples, cfg.seed);
    let rep = verify_ernst_system(&data, &samples)?;
    let tol = cfg.tol();
    let mut checks = vec![
        Check::stats("ernst_ricci", rep.ricci.clone(), tol),
        Check::stats("ernst_wave_x", rep.wave_x.clone(), tol),
        Check::stats("ernst_wave_y", rep.wave_y.clone(), tol),
        Check::stats("twist_curl", rep.curl.clone(), tol),
    ];
    // Round trip X⁻¹h + X A⊗A, X A, X against the ingoing Kerr chart.
    let kerr = kerr_ingoing(cfg.m, cfg.a)?;
    let rows: Vec<(f64, Vec<f64>)> = samples
        .par_iter()
        .map(|x| {
            let g = assemble_spacetime(&data, x)?;
            let x4 = [x[0], x[1], x[2], 0.7];
            let a = g.metric_at(&x4)?;
            let b = kerr.metric_at(&x4)?;
            let dev = a.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            Ok((dev / max_abs(&b), x4.to_vec()))
        })
        .collect::<Result<_>>()?;
    checks.push(Check::stats("assembled_metric_round_trip", rows.into_iter().collect(), 1e-10));
    let metrics = vec![
        MetricInfo { name: "kerr_quotient".into(), params: q.metric().params.clone(), hash: q.hash() },
        MetricInfo::from(&kerr),
    ];
    Ok(Outcome { metrics, checks, details: json!({ "samples": rep.samples }) })
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
    d / max_abs(b).max(f64::MIN_POSITIVE)
}

fn quotient_suite(cfg: &RunConfig) -> Result<Outcome> {
    let q = kerr_quotient(cfg.m, cfg.a)?;
    let p = q.params;
    let data = ReducedData::from(&q);
    let samples = quotient_samples(p, cfg.samples, cfg.seed);
    let rows: Vec<[f64; 5]> = samples
        .par_iter()
        .map(|x| {
            let (th, r) = (x[0], x[1]);
            let qp = quotient_point(&data, x, None)?;
            let ric: Vec<f64> = closed_forms::ricci(p, th, r).iter().flatten().copied().collect();
            let (bx, by) = closed_forms::boxes(p, th, r);
            let (dx, dy) = closed_forms::gradients(p, th, r);
            let c = closed_forms::curl(p, th, r);
            let (xv, yv) = closed_forms::potentials(p, th, r);
            let pot = rel_dev(&[data.x.eval(x), data.y.eval(x)], &[xv, yv]);
            let grads = rel_dev(&[qp.dx.as_slice(), qp.dy.as_slice()].concat(), &[dx, dy].concat());
            Ok([
                rel_dev(&qp.ricci, &ric),
                rel_dev(&[qp.box_x, qp.box_y], &[bx, by]),
                grads.max(pot),
                rel_dev(&[qp.curl[1], qp.curl[5], qp.curl[6]], &c),
                max_abs(&qp.curl_defect()) / qp.scale(),
            ])
        })
        .collect::<Result<_>>()?;
    let col = |k: usize| -> ResidualStats { rows.iter().zip(&samples).map(|(r, x)| (r[k], x.clone())).collect() };
    let tol = cfg.tol();
    let checks = vec![
        Check::stats("quotient_ricci_closed_form", col(0), tol),
        Check::stats("wave_operators_closed_form", col(1), tol),
        Check::stats("potentials_and_gradients_closed_form", col(2), tol),
        Check::stats("curl_closed_form", col(3), tol),
        Check::stats("curl_identity", col(4), tol),
    ];
    let metrics = vec![MetricInfo { name: "kerr_quotient".into(), params: q.metric().params.clone(), hash: q.hash() }];
    Ok(Outcome { metrics, checks, details: json!({ "samples": samples.len() }) })
}

// ---------------------------------------------------------------------------
// extend

const KERR_BASE: (f64, f64) = (1.1, 1.4);

fn extend_sigmas() -> Vec<[f64; 3]> {
    vec![[0.0, 0.0, 0.0], [0.05, 0.1, 0.0], [-0.04, 0.0, 0.2]]
}

struct ExtendSetup {
    metric: MetricDescriptor,
    congruence: Congruence,
    z: Vec<Expr>,
    killing: bool,
    cascade_spec: crate::killext::CascadeSpec,
}

fn extend_setup(cfg: &RunConfig) -> Result<ExtendSetup> {
    let field = cfg.field.as_deref().expect("resolved");
    match cfg.metric.as_deref().expect("resolved") {
        "kerr_ingoing" => {
            let (metric, congruence) = setups::kerr_congruence(cfg.m, cfg.a, KERR_BASE.0, KERR_BASE.1, extend_sigmas())?;
            let (z, killing) = match field {
                "T" => (metric.vector("T").expect("T").to_vec(), true),
                "Z" | "Z_phi" => (metric.vector("Z").expect("Z").to_vec(), true),
                "perturbed" => (setups::perturbed_t(0.1), false),
                other => return Err(GeoError::Input(format!("unknown seed field {other:?} for kerr_ingoing"))),
            };
            Ok(ExtendSetup { metric, congruence, z, killing, cascade_spec: setups::kerr_cascade_spec(1e-6) })
        }
        "minkowski" => {
            let (metric, congruence) = setups::minkowski_null(vec![[0.0, 0.0, 0.0], [0.0, 1.0, -0.5], [0.0, -0.3, 0.4]]);
            let (z, killing) = match field {
                "rotation" => (metric.vector("rotation_yz").expect("rotation").to_vec(), true),
                "perturbed" => {
                    let (x, y) = (Expr::var(1), Expr::var(2));
                    (vec![&x * &y, &y * &y * 0.5, &x * &x, Expr::c(0.2) * &x], false)
                }
                other => return Err(GeoError::Input(format!("unknown seed field {other:?} for minkowski"))),
            };
            Ok(ExtendSetup { metric, congruence, z, killing, cascade_spec: setups::minkowski_cascade_spec(1e-6) })
        }
        other => Err(GeoError::Input(format!("unknown metric {other:?} for extend"))),
    }
}

fn identity_rows(geos: &[ExtendedGeodesic]) -> Result<(f64, f64, f64)> {
    let (mut tr, mut div, mut weyl) = (0.0f64, 0.0f64, 0.0f64);
    for g in geos {
        let r = transport_residuals(g)?;
        tr = tr.max(r.b).max(r.bdot).max(r.p);
        div = div.max(g.sup(|s| s.tensors.divergence_residual()));
        for s in &g.samples {
            let wb = weyl_battery(&s.tensors.w, &s.tensors.g_inv);
            weyl = weyl.max(wb.worst() / wb.scale.max(1.0));
        }
    }
    Ok((tr, div, weyl))
}

fn cmd_extend(cfg: &RunConfig) -> Result<Outcome> {
    let setup = extend_setup(cfg)?;
    let (step, span) = (cfg.step.expect("resolved"), cfg.span.expect("resolved"));
    let every = ((0.01 / step).round() as usize).max(1);
    let ext = |z: &[Expr], mode: SeedMode, step: f64| {
        let every = ((0.01 / step).round() as usize).max(1);
        extend_vector(&setup.metric, &Seed { z: z.to_vec(), mode }, &setup.congruence, &ExtensionConfig { step, span, sample_every: every })
    };
    let tol = cfg.tol();
    let mut checks = Vec::new();
    let mut details = serde_json::Map::new();
    details.insert("sample_every".into(), json!(every));

    let field_mode = ext(&setup.z, SeedMode::Field, step)?;
    let pi_sup = field_mode.iter().fold(0.0f64, |m, g| m.max(g.sup(|s| s.tensors.pi.max_abs())));
    if setup.killing {
        checks.push(Check::at_most("sup_deformation", pi_sup, tol));
        // Error at the end of one long geodesic, halving the step twice.
        let mut c1 = setup.congruence.clone();
        c1.sigmas.truncate(1);
        let err = |h: f64| -> Result<f64> {
            let cfg = ExtensionConfig { step: h, span: 0.4, sample_every: 1 };
            let g = extend_vector(&setup.metric, &Seed { z: setup.z.clone(), mode: SeedMode::Field }, &c1, &cfg)?;
            Ok(g[0].samples.last().expect("samples").tensors.pi.max_abs())
        };
        let e = [err(0.2)?, err(0.1)?, err(0.05)?];
        details.insert("convergence_errors".into(), json!(e));
        if e[2] < 1e-12 {
            checks.push(Check::holds("fourth_order_convergence", true, "integration error at roundoff level"));
        } else {
            for (k, r) in [e[0] / e[1], e[1] / e[2]].into_iter().enumerate() {
                checks.push(Check::within(&format!("convergence_ratio_{}", k + 1), r, 12.0, 20.0));
            }
        }
    } else {
        details.insert("sup_deformation".into(), json!(pi_sup));
    }

    // Structure identities need deformation-compatible data, checked at the step and at half of it.
    for (label, h) in [("", step), ("_half_step", step / 2.0)] {
        let geos = if setup.killing && label.is_empty() {
            field_mode.clone()
        } else {
            ext(&setup.z, SeedMode::DeformationCompatible, h)?
        };
        let (tr, div, weyl) = identity_rows(&geos)?;
        checks.push(Check::at_most(&format!("transport_identities{label}"), tr, 1e-6));
        checks.push(Check::at_most(&format!("divergence_identity{label}"), div, 1e-5));
        checks.push(Check::at_most(&format!("weyl_symmetries{label}"), weyl, 1e-8));
    }

    let rep = signature_cascade(&setup.metric, &field_mode, &setup.cascade_spec)?;
    if setup.killing {
        checks.push(Check::holds("cascade_all_blocks", rep.passed, format!("first failing block {:?}", rep.first_failing_block)));
    } else {
        let sig = rep.first_failing_signature.map(|s| s as f64).unwrap_or(f64::NAN);
        checks.push(Check::within("cascade_first_failing_signature", sig, 2.0, 2.0));
    }
    details.insert("cascade".into(), serde_json::to_value(&rep).expect("serializes"));
    Ok(Outcome { metrics: vec![MetricInfo::from(&setup.metric)], checks, details: Value::Object(details) })
}

// ---------------------------------------------------------------------------
// pseudoconvex

/// The named defining function at p = 0 and the Minkowski chart it lives in.
pub fn defining_function(name: &str) -> Result<(MetricDescriptor, DefiningFunction)> {
    let p = vec![0.0; 4];
    match name {
        "null_plane" => Ok((minkowski(MinkowskiChart::Cartesian), DefiningFunction { f: Expr::var(0) - Expr::var(1), p })),
        "spacelike_plane" => Ok((minkowski(MinkowskiChart::Cartesian), DefiningFunction { f: Expr::var(0), p })),
        "double_null" => Ok((minkowski(MinkowskiChart::DoubleNull), DefiningFunction { f: double_null_product(0.05), p })),
        other => Err(GeoError::Input(format!("unknown defining function {other:?}"))),
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Certified => "certified",
        Verdict::Refuted => "refuted",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn cmd_pseudoconvex(cfg: &RunConfig) -> Result<Outcome> {
    let fname = cfg.function.as_deref().expect("resolved");
    if cfg.metric.as_deref() != Some("minkowski") {
        return Err(GeoError::Input("pseudoconvex runs on metric minkowski".into()));
    }
    let (metric, df) = defining_function(fname)?;
    let search = SearchConfig { seed: cfg.seed, ..SearchConfig::default() };
    let cert = check_pseudoconvexity(&metric, &df, &search)?;
    let expect = cfg.expect.as_deref().expect("resolved");
    let got = verdict_name(cert.verdict);
    let mut checks = vec![Check::holds("verdict", got == expect, format!("expected {expect}, got {got}"))];
    let pd = point_data(&metric, &df.f, &df.p)?;
    let mut details = serde_json::Map::new();
    details.insert("function".into(), json!(df.f.canonical()));
    match cert.verdict {
        Verdict::Refuted => {
            let x = cert.witness.clone().unwrap_or_default();
            let quad = |m: &[f64]| -> f64 { (0..16).map(|k| m[k] * x[k / 4] * x[k % 4]).sum() };
            let tangency: f64 = x.iter().zip(&pd.grad).map(|(a, b)| a * b).sum();
            let tol = cfg.tol();
            checks.push(Check::at_most("witness_nullity", quad(&pd.g).abs(), tol));
            checks.push(Check::at_most("witness_tangency", tangency.abs(), tol));
            checks.push(Check::at_least("witness_hessian", quad(&pd.hess), -tol));
        }
        Verdict::Certified => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let dirs: Vec<Vec<f64>> = (0..cfg.directions)
                .map(|_| {
                    let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let n = v.iter().map(|t| t * t).sum::<f64>().sqrt().max(1e-300);
                    v.iter().map(|t| t / n).collect()
                })
                .collect();
            let worst = dirs
                .par_iter()
                .map(|x| quantitative_margin(&pd, cert.mu, cert.a1, 1.0 / cert.a1, x))
                .reduce(|| f64::INFINITY, f64::min);
            let grad: f64 = pd.grad.iter().map(|v| v.abs()).sum();
            checks.push(Check::at_least("gradient_margin", grad - 1.0 / cert.a1, 0.0));
            checks.push(Check::at_least("form_margin_min", worst, 0.0).note(format!("{} random unit directions", dirs.len())));
            // Largest radius, halving from 0.1, at which the persisted inequalities hold at every sample.
            let nb = verify_neighborhood(&cert, &metric, &df, search.neighborhood_radius, 256, cfg.seed.wrapping_add(1));
            checks.push(Check::at_least("neighborhood_radius", nb.certified_radius.unwrap_or(0.0), 1e-6));
            details.insert("neighborhood".into(), serde_json::to_value(&nb).expect("serializes"));
        }
        Verdict::Inconclusive => {}
    }
    details.insert("certificate".into(), serde_json::to_value(&cert).expect("serializes"));
    Ok(Outcome { metrics: vec![MetricInfo::from(&metric)], checks, details: Value::Object(details) })
}

// ---------------------------------------------------------------------------
// obstruction

fn obstruction_setup(cfg: &RunConfig) -> ObstructionSetup {
    ObstructionSetup { m: cfg.m, a: cfg.a, theta0: cfg.theta0, ..ObstructionSetup::default() }
}

/// Shear bump used for the data-level certificate.
pub fn shear_bump_data() -> ConformalData {
    ConformalData::from_shear(&bump(0.2, [0.1, 0.0, 0.5], 0.4))
}

fn cmd_obstruction(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.metric.as_deref() != Some("kerr_quotient") {
        return Err(GeoError::Input("obstruction runs on metric kerr_quotient".into()));
    }
    let q = kerr_quotient(cfg.m, cfg.a)?;
    let mut setup = obstruction_setup(cfg);
    setup.max_step = cfg.step.expect("resolved");
    let sweep = obstruction_sweep(&setup, &cfg.eps)?;
    let mut checks = Vec::new();
    for (k, r) in sweep.ratios.iter().enumerate() {
        checks.push(Check::within(&format!("phi_ratio_{}", k + 1), *r, 1.4, 2.6));
    }
    checks.push(Check::at_most("coefficient_bound_ratio", sweep.bound_ratio, 10.0).note(
        "largest perturbed coefficient bound over the unperturbed one",
    ));

    // Data-level certificate on the characteristic surface.
    let reference = ConformalData::flat();
    let translation = vec![Expr::c(1.0), Expr::c(0.0), Expr::c(0.0)];
    let cc = CertificateConfig::default();
    let bumped = certificate_with_refinement(&shear_bump_data(), &reference, &translation, &cc)?;
    checks.push(Check::holds(
        "bump_obstructed",
        bumped.stable && bumped.fine.verdict == Extendibility::Obstructed,
        "verdict on the grid and on the refined grid",
    ));
    checks.push(Check::at_least("bump_witness_residual", bumped.coarse.residual.min(bumped.fine.residual), 1e-3));
    let flat = certificate_with_refinement(&reference, &reference, &translation, &cc)?;
    checks.push(Check::holds(
        "unperturbed_consistent",
        flat.stable && flat.fine.verdict == Extendibility::ExtendibleConsistent,
        "verdict on the grid and on the refined grid",
    ));
    checks.push(Check::at_most("unperturbed_residual", flat.fine.residual_all, 1e-9));

    // Raychaudhuri along generators of the bumped data.
    let data = shear_bump_data();
    let mut ray: f64 = 0.0;
    for g in [[0.1, 0.0], [0.0, 0.2], [-0.3, 0.1]] {
        let p = solve_phi(&data, g, &PhiConfig { phi0: 1.0, dphi0: 0.0, start: 0.0, span: 1.0, step: 1e-3 })?;
        ray = ray.max(check_constraints(&p)?.raychaudhuri);
    }
    checks.push(Check::at_most("raychaudhuri", ray, cfg.tol()));

    // The null plane refutation, kept as a regression.
    let (mink, df) = defining_function("null_plane")?;
    let c = check_pseudoconvexity(&mink, &df, &SearchConfig { seed: cfg.seed, ..SearchConfig::default() })?;
    checks.push(Check::holds("null_plane_refuted", c.verdict == Verdict::Refuted, "regression"));

    let metrics = vec![MetricInfo { name: "kerr_quotient".into(), params: q.metric().params.clone(), hash: q.hash() }];
    let details = json!({
        "sweep": sweep,
        "certificate_bump": bumped,
        "certificate_unperturbed": flat,
        "data_hash": data.hash(),
    });
    Ok(Outcome { metrics, checks, details })
}

/// Parses arguments, runs, and maps the outcome to an exit code:
/// 0 when every check passed, 1 when some check failed, 2 on errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = cli.to_config().and_then(|c| execute(&c));
    match result {
        Ok(r) => {
            for c in r.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL {}: {}", c.name, c.value);
            }
            if r.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(cmd: Command) -> RunConfig {
        RunConfig { command: Some(cmd), ..RunConfig::default() }
    }

    #[test]
    fn defaults_resolve_per_command() {
        let c = base(Command::Verify).resolve().unwrap();
        assert_eq!(c.suite.as_deref(), Some("curvature"));
        assert_eq!(c.metric.as_deref(), Some("kerr_bl"));
        assert_eq!(c.tol, Some(1e-9));
        let c = RunConfig { metric: Some("minkowski".into()), ..base(Command::Verify) }.resolve().unwrap();
        assert_eq!(c.tol, Some(1e-13));
        let c = base(Command::Pseudoconvex).resolve().unwrap();
        assert_eq!(c.expect.as_deref(), Some("refuted"));
    }

    #[test]
    fn rejects_bad_tolerance_and_missing_command() {
        assert!(RunConfig::default().resolve().is_err());
        assert!(RunConfig { tol: Some(0.0), ..base(Command::Verify) }.resolve().is_err());
        assert!(RunConfig { tol: Some(-1.0), ..base(Command::Extend) }.resolve().is_err());
    }

    #[test]
    fn unknown_names_are_errors() {
        assert!(run(&RunConfig { suite: Some("nope".into()), ..base(Command::Verify) }).is_err());
        assert!(run(&RunConfig { metric: Some("nope".into()), ..base(Command::Verify) }).is_err());
        assert!(run(&RunConfig { function: Some("nope".into()), ..base(Command::Pseudoconvex) }).is_err());
    }

    #[test]
    fn grids_stay_in_the_domain() {
        for name in ["kerr_bl", "kerr_ingoing", "minkowski"] {
            let (m, pts) = curvature_grid(name, 1.0, 0.9, 4).unwrap();
            assert_eq!(pts.len(), 64, "{name}");
            assert!(pts.iter().all(|x| m.domain.contains(x)));
        }
        assert!(curvature_grid("kerr_bl", 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("lorentzkit-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("run.toml");
        std::fs::write(&p, "command = \"verify\"\nsuite = \"ernst\"\nm = 2.0\nseed = 3\n[output]\ntiming = false\n").unwrap();
        let cli = Cli::try_parse_from(["lorentzkit", "--config", p.to_str().unwrap(), "--seed", "9"]).unwrap();
        let c = cli.to_config().unwrap();
        assert_eq!(c.command, Some(Command::Verify));
        assert_eq!(c.suite.as_deref(), Some("ernst"));
        assert_eq!((c.m, c.seed), (2.0, 9));
        std::fs::write(&p, "bogus = 1\n").unwrap();
        let cli = Cli::try_parse_from(["lorentzkit", "--config", p.to_str().unwrap()]).unwrap();
        assert!(cli.to_config().is_err());
    }

    #[test]
    fn minkowski_curvature_passes() {
        let r = run(&RunConfig { metric: Some("minkowski".into()), grid: 3, ..base(Command::Verify) }).unwrap();
        assert!(r.passed, "{:?}", r.checks);
        assert_eq!(r.check("riemann_abs").unwrap().value, 0.0);
        assert!(r.wall_clock_s.is_none());
    }

    #[test]
    fn quotient_samples_are_seeded_and_in_domain() {
        let p = KerrParameters::new(1.0, 0.5).unwrap();
        let a = quotient_samples(p, 50, 4);
        assert_eq!(a, quotient_samples(p, 50, 4));
        assert_ne!(a, quotient_samples(p, 50, 5));
        let q = kerr_quotient(1.0, 0.5).unwrap();
        assert!(a.iter().all(|x| q.domain.contains(x)));
    }

    #[test]
    fn check_bounds() {
        assert!(Check::within("r", 2.0, 1.4, 2.6).passed);
        assert!(!Check::within("r", f64::NAN, 1.4, 2.6).passed);
        assert!(!Check::at_most("x", f64::NAN, 1.0).passed);
        assert!(Check::holds("h", true, "").passed && !Check::holds("h", false, "").passed);
    }
}
