//! Stationary reduction of Kerr: the Ernst system on the quotient (h, X, Y, A),
//! reassembly of the 4-metric, transport of the twist 1-form along a null
//! congruence, and the obstruction experiment along the null surface N₁.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Domain, DomainKind, KerrParameters, MetricDescriptor, QuotientData};
use crate::error::{GeoError, Result};
use crate::expr::{hash_exprs, Expr};
use crate::jet::{invert_matrix, exponent, Jet};
use crate::report::{max_abs, ResidualStats};
use crate::tensor::{connection_at, curvature_at, permutation_sign};

const D: usize = 3;

/// Quotient fields (h, X, Y, A) on a 3-dimensional slice.
#[derive(Clone, Debug)]
pub struct ReducedData {
    pub h: Vec<Expr>,
    pub x: Expr,
    pub y: Expr,
    pub a_form: Vec<Expr>,
    pub domain: Domain,
}

impl From<&QuotientData> for ReducedData {
    fn from(q: &QuotientData) -> Self {
        ReducedData {
            h: q.h.clone(),
            x: q.x.clone(),
            y: q.y.clone(),
            a_form: q.a_form.clone(),
            domain: q.domain.clone(),
        }
    }
}

impl ReducedData {
    pub fn metric(&self) -> MetricDescriptor {
        MetricDescriptor {
            name: "reduced".into(),
            coords: vec!["x1".into(), "x2".into(), "x3".into()],
            params: vec![],
            g: self.h.clone(),
            domain: self.domain.clone(),
            vectors: vec![],
            scalars: vec![("X".into(), self.x.clone()), ("Y".into(), self.y.clone())],
        }
    }

    pub fn hash(&self) -> String {
        hash_exprs(self.h.iter().chain([&self.x, &self.y]).chain(self.a_form.iter()))
    }
}

fn levi(a: usize, b: usize, c: usize) -> f64 {
    permutation_sign(&[a, b, c]).unwrap_or(0.0)
}

/// Everything the Ernst identities need at one point, in coordinate components.
#[derive(Clone, Debug, Serialize)]
pub struct QuotientPoint {
    pub point: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub h: Vec<f64>,
    pub h_inv: Vec<f64>,
    /// |det h|.
    pub det: f64,
    /// Γ^d_{ab}, stored [d][a][b].
    pub christoffel: Vec<f64>,
    pub ricci: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub box_x: f64,
    pub box_y: f64,
    /// ∂_a A_b − ∂_b A_a.
    pub curl: Vec<f64>,
    /// ∈_{abc}∇^c Y with ∈_{123} = −|h|^{1/2}.
    pub dual_dy: Vec<f64>,
}

fn box_of(j: &Jet, h_inv: &[f64], gam: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..D {
        for b in 0..D {
            let mut e = [0u8; D];
            e[a] += 1;
            e[b] += 1;
            let mut hess = j.derivative(&e);
            for c in 0..D {
                hess -= gam[(c * D + a) * D + b] * j.d(c);
            }
            s += h_inv[a * D + b] * hess;
        }
    }
    s
}

/// Ricci, d'Alembertians, gradients and the twist curl at a point; `gauge`
/// replaces A by A − d(gauge).
pub fn quotient_point(data: &ReducedData, x: &[f64], gauge: Option<&Expr>) -> Result<QuotientPoint> {
    let b = curvature_at(&data.metric(), x, 2)?;
    let gam: Vec<f64> = b.gamma.iter().map(|j| j.value()).collect();
    let h = b.g_val();
    let h_inv = b.g_inv_val();
    let xj = data.x.lift(x, 2)?;
    let yj = data.y.lift(x, 2)?;
    let aj: Vec<Jet> = data
        .a_form
        .iter()
        .map(|e| e.lift(x, 1))
        .collect::<std::result::Result<_, _>>()?;
    let fj = gauge.map(|f| f.lift(x, 2)).transpose()?;
    let da = |a: usize, bb: usize| -> f64 {
        // ∂_a of the gauge-shifted A_b; second derivatives of f are symmetric and cancel in the curl.
        let mut v = aj[bb].d(a);
        if let Some(f) = &fj {
            let mut e = [0u8; D];
            e[a] += 1;
            e[bb] += 1;
            v -= f.derivative(&e);
        }
        v
    };
    let mut curl = vec![0.0; D * D];
    for a in 0..D {
        for c in 0..D {
            curl[a * D + c] = da(a, c) - da(c, a);
        }
    }
    let dx: Vec<f64> = (0..D).map(|a| xj.d(a)).collect();
    let dy: Vec<f64> = (0..D).map(|a| yj.d(a)).collect();
    let dy_up: Vec<f64> = (0..D).map(|a| (0..D).map(|c| h_inv[a * D + c] * dy[c]).sum()).collect();
    let vol = -b.det.abs().sqrt();
    let mut dual_dy = vec![0.0; D * D];
    for a in 0..D {
        for c in 0..D {
            dual_dy[a * D + c] = (0..D).map(|e| vol * levi(a, c, e) * dy_up[e]).sum();
        }
    }
    Ok(QuotientPoint {
        point: x.to_vec(),
        x: xj.value(),
        y: yj.value(),
        det: b.det.abs(),
        box_x: box_of(&xj, &h_inv, &gam),
        box_y: box_of(&yj, &h_inv, &gam),
        ricci: b.ricci.iter().map(|j| j.value()).collect(),
        christoffel: gam,
        h,
        h_inv,
        dx,
        dy,
        curl,
        dual_dy,
    })
}

impl QuotientPoint {
    fn hdot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in 0..D {
            for b in 0..D {
                s += self.h_inv[a * D + b] * u[a] * v[b];
            }
        }
        s
    }

    /// (1/2X²)(∇_aX∇_bX + ∇_aY∇_bY).
    pub fn ernst_stress(&self) -> Vec<f64> {
        let k = 0.5 / (self.x * self.x);
        (0..D * D)
            .map(|q| k * (self.dx[q / D] * self.dx[q % D] + self.dy[q / D] * self.dy[q % D]))
            .collect()
    }

    /// Right sides of the wave identities for X and Y.
    pub fn wave_sources(&self) -> (f64, f64) {
        let xr = (self.hdot(&self.dx, &self.dx) - self.hdot(&self.dy, &self.dy)) / self.x;
        let yr = 2.0 * self.hdot(&self.dx, &self.dy) / self.x;
        (xr, yr)
    }

    /// □Y − 2X⁻¹h^{ab}∂_aX∂_bY.
    pub fn eq_y_residual(&self) -> f64 {
        self.box_y - self.wave_sources().1
    }

    /// X²(∂_aA_b − ∂_bA_a) − ∈_{abc}∇^cY.
    pub fn curl_defect(&self) -> Vec<f64> {
        (0..D * D).map(|q| self.x * self.x * self.curl[q] - self.dual_dy[q]).collect()
    }

    pub fn scale(&self) -> f64 {
        let (xr, yr) = self.wave_sources();
        [
            max_abs(&self.ricci),
            max_abs(&self.ernst_stress()),
            self.box_x.abs(),
            self.box_y.abs(),
            xr.abs(),
            yr.abs(),
            self.x * self.x * max_abs(&self.curl),
            max_abs(&self.dual_dy),
        ]
        .into_iter()
        .fold(f64::MIN_POSITIVE, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    /// Relative residual of Ric(h) = (1/2X²)(dX⊗dX + dY⊗dY).
    pub ricci: ResidualStats,
    /// Real and imaginary parts of the wave identity for X + iY.
    pub wave_x: ResidualStats,
    pub wave_y: ResidualStats,
    /// X²dA = ⋆dY.
    pub curl: ResidualStats,
    pub samples: usize,
}

impl ReductionReport {
    pub fn worst(&self) -> f64 {
        [self.ricci.max, self.wave_x.max, self.wave_y.max, self.curl.max]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Residuals of the Ernst system and the twist identity, each divided by the
/// largest term appearing at the sample.
pub fn verify_ernst_system(data: &ReducedData, samples: &[Vec<f64>]) -> Result<ReductionReport> {
    let pts: Vec<QuotientPoint> = samples
        .par_iter()
        .map(|x| quotient_point(data, x, None))
        .collect::<Result<_>>()?;
    let mut rep = ReductionReport {
        ricci: ResidualStats::new(),
        wave_x: ResidualStats::new(),
        wave_y: ResidualStats::new(),
        curl: ResidualStats::new(),
        samples: pts.len(),
    };
    for p in &pts {
        let s = p.scale();
        let t = p.ernst_stress();
        let ric = (0..D * D).fold(0.0f64, |m, q| m.max((p.ricci[q] - t[q]).abs()));
        let (xr, yr) = p.wave_sources();
        rep.ricci.push(ric / s, &p.point);
        rep.wave_x.push((p.box_x - xr).abs() / s, &p.point);
        rep.wave_y.push((p.box_y - yr).abs() / s, &p.point);
        rep.curl.push(max_abs(&p.curl_defect()) / s, &p.point);
    }
    Ok(rep)
}

/// Interior (θ, r, φ₋) grid of the ergo-region side of the Kerr quotient.
pub fn quotient_grid(p: KerrParameters, n_theta: usize, n_r: usize, margin: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..n_theta {
        let th = 0.15 + (std::f64::consts::PI - 0.3) * (i as f64 + 0.5) / n_theta as f64;
        // 2mr − q² > 0 between the roots m ± (m² − a²cos²θ)^{1/2}.
        let disc = (p.m * p.m - p.a * p.a * th.cos().powi(2)).sqrt();
        let (lo, hi) = (p.m - disc + margin, p.m + disc - margin);
        for j in 0..n_r {
            let r = lo + (hi - lo) * (j as f64 + 0.5) / n_r as f64;
            if (p.delta(r)).abs() > margin {
                out.push(vec![th, r, 0.3]);
            }
        }
    }
    out
}

/// Closed forms of the Kerr quotient quantities in (θ, r, φ₋).
pub mod closed_forms {
    use crate::catalog::KerrParameters;

    fn parts(p: KerrParameters, th: f64, r: f64) -> (f64, f64, f64, f64, f64) {
        let q2 = p.q2(r, th);
        (th.sin(), th.cos(), q2, p.ergo(r, th), p.delta(r))
    }

    pub fn h_inv(p: KerrParameters, th: f64, r: f64) -> [[f64; 3]; 3] {
        let (s, _, _, e, dl) = parts(p, th, r);
        [
            [1.0 / e, 0.0, 0.0],
            [0.0, dl / e, -p.a / e],
            [0.0, -p.a / e, 1.0 / (s * s * e)],
        ]
    }

    /// Ricci tensor of h.
    pub fn ricci(p: KerrParameters, th: f64, r: f64) -> [[f64; 3]; 3] {
        let (s, _, _, e, _) = parts(p, th, r);
        let m2 = p.m * p.m;
        let mut out = [[0.0; 3]; 3];
        out[0][0] = 2.0 * m2 * p.a * p.a * s * s / (e * e);
        out[1][1] = 2.0 * m2 / (e * e);
        out
    }

    /// (∂X, ∂Y).
    pub fn gradients(p: KerrParameters, th: f64, r: f64) -> ([f64; 3], [f64; 3]) {
        let (s, c, q2, _, _) = parts(p, th, r);
        let (m, a) = (p.m, p.a);
        let q4 = q2 * q2;
        (
            [4.0 * a * a * m * r * s * c / q4, (2.0 * m * q2 - 4.0 * m * r * r) / q4, 0.0],
            [
                (2.0 * m * a * s * q2 - 4.0 * m * a.powi(3) * s * c * c) / q4,
                4.0 * m * r * a * c / q4,
                0.0,
            ],
        )
    }

    /// (□X, □Y).
    pub fn boxes(p: KerrParameters, th: f64, r: f64) -> (f64, f64) {
        let (_, c, q2, e, _) = parts(p, th, r);
        let (m, a) = (p.m, p.a);
        let den = q2.powi(3) * e;
        let bx = (24.0 * m * m * r * r * a * a * c * c - 4.0 * m * m * r.powi(4) - 4.0 * m * m * a.powi(4) * c.powi(4)) / den;
        let by = 16.0 * m * m * r * a * c * (r * r - a * a * c * c) / den;
        (bx, by)
    }

    /// (∂₁A₂ − ∂₂A₁, ∂₂A₃ − ∂₃A₂, ∂₃A₁ − ∂₁A₃).
    pub fn curl(p: KerrParameters, th: f64, r: f64) -> [f64; 3] {
        let (s, c, _, e, dl) = parts(p, th, r);
        let (m, a) = (p.m, p.a);
        let e2 = e * e;
        [
            4.0 * a * a * m * r * s * c / e2,
            -2.0 * m * a * s * s * (r * r - a * a * c * c) / e2,
            -4.0 * m * r * a * dl * s * c / e2,
        ]
    }

    /// X, Y.
    pub fn potentials(p: KerrParameters, th: f64, r: f64) -> (f64, f64) {
        let (_, c, q2, e, _) = parts(p, th, r);
        (e / q2, -2.0 * p.m * p.a * c / q2)
    }
}

/// The 4-metric X⁻¹h_ab + X A_aA_b, X A_a, X on slice × ℝ, with the new
/// coordinate last and every field independent of it.
pub fn assemble_spacetime(data: &ReducedData, probe: &[f64]) -> Result<MetricDescriptor> {
    data.domain.check(probe)?;
    let xv = data.x.eval(probe);
    if !(xv > 0.0) {
        return Err(GeoError::Precondition(format!("X = {xv} is not positive at {probe:?}")));
    }
    let x = &data.x;
    let a = &data.a_form;
    let mut g = vec![Expr::c(0.0); 16];
    for i in 0..D {
        for j in 0..D {
            g[i * 4 + j] = &data.h[i * D + j] / x + x * &(&a[i] * &a[j]);
        }
        g[i * 4 + 3] = x * &a[i];
        g[3 * 4 + i] = x * &a[i];
    }
    g[15] = x.clone();
    let base = data.domain.clone();
    let xe = data.x.clone();
    let pred: crate::catalog::Predicate = Arc::new(move |p: &[f64], _eps: f64| {
        if let Some(r) = base.violation(&p[..D]) {
            return Some(r);
        }
        (xe.eval(&p[..D]) <= 0.0).then(|| "X <= 0".to_string())
    });
    Ok(MetricDescriptor {
        name: "assembled".into(),
        coords: vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()],
        params: vec![],
        g,
        domain: Domain::new(DomainKind::Custom("quotient slice with X > 0".into(), pred)),
        vectors: vec![("T".into(), (0..4).map(|k| Expr::c(if k == 3 { 1.0 } else { 0.0 })).collect())],
        scalars: vec![],
    })
}

/// Inverse of the assembled metric from h⁻¹, X and A (row-major 4×4), and |det g|.
pub fn assembled_inverse(data: &ReducedData, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let b = connection_at(&data.metric(), x, 1)?;
    let hi = b.g_inv_val();
    let xv = data.x.eval(x);
    let a: Vec<f64> = data.a_form.iter().map(|e| e.eval(x)).collect();
    let au: Vec<f64> = (0..D).map(|i| (0..D).map(|j| hi[i * D + j] * a[j]).sum()).collect();
    let mut out = vec![0.0; 16];
    for i in 0..D {
        for j in 0..D {
            out[i * 4 + j] = xv * hi[i * D + j];
        }
        out[i * 4 + 3] = -xv * au[i];
        out[3 * 4 + i] = -xv * au[i];
    }
    out[15] = 1.0 / xv + xv * (0..D).map(|i| au[i] * a[i]).sum::<f64>();
    Ok((out, b.det.abs() / (xv * xv)))
}

// ---------------------------------------------------------------------------
// Transport of A along a null geodesic congruence.

/// Null geodesic congruence leaving a 2-surface of the slice.
#[derive(Clone, Debug)]
pub struct SliceCongruence {
    pub base: Vec<f64>,
    /// Tangent directions of the initial surface.
    pub directions: [Vec<f64>; 2],
    /// Initial tangent field; only its values on the surface are used.
    pub l: Vec<Expr>,
    pub sigmas: Vec<[f64; 2]>,
}

impl SliceCongruence {
    pub fn point(&self, s: &[f64; 2]) -> Vec<f64> {
        (0..D)
            .map(|k| self.base[k] + s[0] * self.directions[0][k] + s[1] * self.directions[1][k])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TransportConfig {
    pub step: f64,
    pub span: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { step: 2.5e-5, span: 0.01 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ASample {
    pub s: f64,
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    /// Transported Ã.
    pub a: Vec<f64>,
    /// A − df with L(f) = L·A and f = 0 on the initial surface.
    pub a_gauged: Vec<f64>,
    pub l_dot_a: f64,
    /// Q_ab = X²(∇_aÃ_b − ∇_bÃ_a) − ∈_abc∇^cY.
    pub q: Vec<f64>,
    /// ∂_bL^a, stored [b][a].
    pub dl: Vec<f64>,
    pub xval: f64,
    /// □Y − 2X⁻¹∇X·∇Y at the sample.
    pub eq_y: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ATransport {
    pub sigma: [f64; 2],
    pub step: f64,
    pub samples: Vec<ASample>,
}

#[derive(Clone, Debug)]
struct AFields {
    l: Vec<Jet>,
    a: Vec<Jet>,
    f: Jet,
}

impl AFields {
    fn zip(&self, o: &AFields, op: impl Fn(&Jet, &Jet) -> Jet) -> AFields {
        let m = |p: &[Jet], q: &[Jet]| p.iter().zip(q).map(|(x, y)| op(x, y)).collect();
        AFields { l: m(&self.l, &o.l), a: m(&self.a, &o.a), f: op(&self.f, &o.f) }
    }

    fn all(&self) -> impl Iterator<Item = &Jet> {
        self.l.iter().chain(&self.a).chain(std::iter::once(&self.f))
    }
}

/// Known fields entering the transport sources, as jets in the working variables.
struct Context {
    gamma: Vec<Jet>,
    /// X⁻² ∈_{abc} h^{cd}∂_dY, stored [a][b].
    twist: Vec<Jet>,
    a_base: Vec<Jet>,
}

fn context_at(data: &ReducedData, x: &[f64], k: usize) -> Result<Context> {
    let metric = data.metric();
    let b = connection_at(&metric, x, k + 1)?;
    let vars = crate::expr::variables(x, k + 1);
    let mut ev = crate::expr::Evaluator::new(&vars);
    let xj = ev.eval(&data.x)?;
    let yj = ev.eval(&data.y)?;
    let a_base = data
        .a_form
        .iter()
        .map(|e| Ok(ev.eval(e)?.truncate(k)))
        .collect::<Result<Vec<_>>>()?;
    let dy: Vec<Jet> = (0..D).map(|c| yj.partial(c)).collect::<std::result::Result<_, _>>()?;
    let g = &b.g;
    let det = &(&g[0].mul_jet(&(&g[4].mul_jet(&g[8]) - &g[5].mul_jet(&g[7])))
        - &g[1].mul_jet(&(&g[3].mul_jet(&g[8]) - &g[5].mul_jet(&g[6]))))
        + &g[2].mul_jet(&(&g[3].mul_jet(&g[7]) - &g[4].mul_jet(&g[6])));
    let vol = if det.value() < 0.0 { det.scale(-1.0) } else { det.clone() }.sqrt()?;
    let x2inv = xj.truncate(k).mul_jet(&xj.truncate(k)).recip()?;
    let mut dy_up = vec![Jet::zero(D, k); D];
    for c in 0..D {
        for d in 0..D {
            dy_up[c].mul_acc(&b.g_inv[c * D + d], &dy[d]);
        }
    }
    let mut twist = vec![Jet::zero(D, k); D * D];
    for a in 0..D {
        for bb in 0..D {
            for c in 0..D {
                let s = levi(a, bb, c);
                if s != 0.0 {
                    twist[a * D + bb].axpy(-s, &vol.mul_jet(&dy_up[c]));
                }
            }
            twist[a * D + bb] = twist[a * D + bb].mul_jet(&x2inv);
        }
    }
    Ok(Context { gamma: b.gamma.iter().map(|j| j.truncate(k)).collect(), twist, a_base })
}

fn compose_ctx(c: &Context, q: &[Jet]) -> Context {
    let f = |v: &[Jet]| v.iter().map(|j| j.compose(q)).collect();
    Context { gamma: f(&c.gamma), twist: f(&c.twist), a_base: f(&c.a_base) }
}

type Deriv<'a> = &'a dyn Fn(&Jet, usize) -> Result<Jet>;

fn sources(c: &Context, f: &AFields, d: Deriv) -> Result<AFields> {
    let jd = f.l[0].dim();
    let kl = f.l[0].order();
    let ka = f.a[0].order();
    let mut gl = Vec::with_capacity(D);
    for e in 0..D {
        let mut acc = Jet::zero(jd, kl);
        for a in 0..D {
            for b in 0..D {
                acc.axpy(-1.0, &c.gamma[(e * D + a) * D + b].mul_jet(&f.l[a].mul_jet(&f.l[b])));
            }
        }
        gl.push(acc);
    }
    let mut ga = Vec::with_capacity(D);
    for b in 0..D {
        let mut acc = Jet::zero(jd, ka);
        for a in 0..D {
            acc.axpy(-1.0, &f.a[a].mul_jet(&d(&f.l[a], b)?));
            acc.mul_acc(&c.twist[a * D + b], &f.l[a]);
        }
        ga.push(acc);
    }
    let mut gf = Jet::zero(jd, f.f.order());
    for a in 0..D {
        gf.mul_acc(&f.l[a], &c.a_base[a]);
    }
    Ok(AFields { l: gl, a: ga, f: gf })
}

fn advect(fj: &Jet, coef: &[Jet], d: Deriv, vars: std::ops::Range<usize>) -> Result<Jet> {
    let k = fj.order();
    let mut acc = Jet::zero(fj.dim(), k);
    for v in vars {
        acc.mul_acc(&coef[v], &d(fj, v)?.pad(k));
    }
    Ok(acc)
}

fn advect_all(f: &AFields, coef: &[Jet], d: Deriv, vars: std::ops::Range<usize>) -> Result<AFields> {
    let m = |v: &[Jet]| v.iter().map(|j| advect(j, coef, d, vars.clone())).collect::<Result<Vec<_>>>();
    Ok(AFields { l: m(&f.l)?, a: m(&f.a)?, f: advect(&f.f, coef, d, vars.clone())? })
}

fn affine(origin: &[f64], m: &[f64], order: usize) -> Vec<Jet> {
    (0..D)
        .map(|mu| {
            let mut j = Jet::constant(D, order, origin[mu]);
            for i in 0..D {
                j.axpy(m[mu * D + i], &Jet::variable(D, order, i, 0.0));
            }
            j
        })
        .collect()
}

fn restrict0(j: &Jet) -> Jet {
    let mut out = j.clone();
    for (s, c) in out.coeffs_mut().iter_mut().enumerate() {
        if exponent(D, s)[0] > 0 {
            *c = 0.0;
        }
    }
    out
}

const L_ORDER: usize = 2;

fn seed_fields(data: &ReducedData, c: &SliceCongruence, sigma: &[f64; 2]) -> Result<(Vec<f64>, AFields)> {
    let k = L_ORDER;
    let x0 = c.point(sigma);
    data.domain.check(&x0)?;
    let lv: Vec<f64> = c.l.iter().map(|e| e.eval(&x0)).collect();
    let cols = [&lv, &c.directions[0], &c.directions[1]];
    let mut m = vec![0.0; D * D];
    for (i, col) in cols.iter().enumerate() {
        for mu in 0..D {
            m[mu * D + i] = col[mu];
        }
    }
    let mm = nalgebra::Matrix3::from_row_slice(&m);
    let det = mm.determinant();
    if det.abs() < 1e-10 {
        return Err(GeoError::Precondition(format!("congruence is tangent to the initial surface (det = {det:e})")));
    }
    let mi = mm.try_inverse().ok_or(GeoError::SingularMatrix { det })?;
    let minv: Vec<f64> = (0..D * D).map(|q| mi[(q / D, q % D)]).collect();

    let qlin = affine(&x0, &m, k + 1);
    let ctx = compose_ctx(&context_at(data, &x0, k)?, &qlin);
    let lx = data.metric().field_jets(&c.l, &x0, k)?;
    let l_sig: Vec<Jet> = lx.iter().map(|j| restrict0(&j.compose(&qlin))).collect();
    // Ã = A − (L·A)ℓ on the surface, ℓ the covector dual to L against the surface directions.
    let mut mj = Vec::with_capacity(D * D);
    for mu in 0..D {
        mj.push(l_sig[mu].clone());
        mj.push(Jet::constant(D, k, c.directions[0][mu]));
        mj.push(Jet::constant(D, k, c.directions[1][mu]));
    }
    let inv = invert_matrix(&mj, D)?;
    let mut la = Jet::zero(D, k);
    for mu in 0..D {
        la.mul_acc(&l_sig[mu], &ctx.a_base[mu]);
    }
    let a_sig: Vec<Jet> = (0..D)
        .map(|b| restrict0(&(&ctx.a_base[b] - &la.mul_jet(&inv[b]))).truncate(k - 1))
        .collect();
    let sig = AFields { l: l_sig, a: a_sig, f: Jet::zero(D, k - 1) };
    let dq = |j: &Jet, a: usize| -> Result<Jet> {
        let mut acc = Jet::zero(j.dim(), j.order().saturating_sub(1));
        for i in 0..D {
            acc.axpy(minv[i * D + a], &j.partial(i)?);
        }
        Ok(acc)
    };
    let qd = |j: &Jet, a: usize| -> Result<Jet> { Ok(j.partial(a)?) };
    let mut f = sig.clone();
    for _ in 0..=k {
        let src = sources(&ctx, &f, &dq)?;
        let lq: Vec<Jet> = (0..D)
            .map(|i| {
                let mut acc = Jet::zero(D, k);
                for mu in 0..D {
                    acc.axpy(minv[i * D + mu], &f.l[mu]);
                }
                acc
            })
            .collect();
        let inv0 = lq[0].recip()?;
        let adv = advect_all(&f, &lq, &qd, 1..D)?;
        let rate = src.zip(&adv, |s, a| (s - a).mul_jet(&inv0));
        f = sig.zip(&rate, |s, r| s + &r.pad(s.order()).integrate(0));
    }
    let xq = affine(&[0.0; D], &minv, k);
    let fx = AFields {
        l: f.l.iter().map(|j| j.compose(&xq)).collect(),
        a: f.a.iter().map(|j| j.compose(&xq)).collect(),
        f: f.f.compose(&xq),
    };
    Ok((x0, fx))
}

fn a_rate(data: &ReducedData, x: &[f64], f: &AFields, s: f64) -> Result<(Vec<f64>, AFields)> {
    if !x.iter().all(|v| v.is_finite()) || !f.all().all(|j| j.is_finite()) {
        return Err(GeoError::Caustic { det: f64::NAN, s });
    }
    let ctx = context_at(data, x, L_ORDER)?;
    let d = |j: &Jet, a: usize| -> Result<Jet> { Ok(j.partial(a)?) };
    let src = sources(&ctx, f, &d)?;
    let shift: Vec<Jet> = f.l.iter().map(|j| j.without_value()).collect();
    let adv = advect_all(f, &shift, &d, 0..D)?;
    Ok((f.l.iter().map(|j| j.value()).collect(), src.zip(&adv, |s, a| s - a)))
}

fn a_sample(data: &ReducedData, x: &[f64], f: &AFields, s: f64) -> Result<ASample> {
    let p = quotient_point(data, x, None)?;
    let l: Vec<f64> = f.l.iter().map(|j| j.value()).collect();
    let a: Vec<f64> = f.a.iter().map(|j| j.value()).collect();
    let a0: Vec<f64> = data.a_form.iter().map(|e| e.eval(x)).collect();
    let a_gauged: Vec<f64> = (0..D).map(|b| a0[b] - f.f.d(b)).collect();
    let mut q = vec![0.0; D * D];
    for i in 0..D {
        for j in 0..D {
            q[i * D + j] = p.x * p.x * (f.a[j].d(i) - f.a[i].d(j)) - p.dual_dy[i * D + j];
        }
    }
    let mut dl = vec![0.0; D * D];
    for b in 0..D {
        for a in 0..D {
            dl[b * D + a] = f.l[a].d(b);
        }
    }
    Ok(ASample {
        s,
        x: x.to_vec(),
        l_dot_a: (0..D).map(|b| l[b] * a[b]).sum(),
        l,
        a,
        a_gauged,
        q,
        dl,
        xval: p.x,
        eq_y: p.eq_y_residual(),
    })
}

fn transport_one(data: &ReducedData, c: &SliceCongruence, sigma: [f64; 2], cfg: &TransportConfig) -> Result<ATransport> {
    let (mut x, mut f) = seed_fields(data, c, &sigma)?;
    let n = (cfg.span / cfg.step).round().max(1.0) as usize;
    let h = cfg.span / n as f64;
    let mut out = ATransport { sigma, step: h, samples: vec![a_sample(data, &x, &f, 0.0)?] };
    let step = |x: &[f64], f: &AFields, dx: &[f64], df: &AFields, t: f64| {
        (
            x.iter().zip(dx).map(|(a, b)| a + t * b).collect::<Vec<f64>>(),
            f.zip(df, |a, b| {
                let mut o = a.clone();
                o.axpy(t, b);
                o
            }),
        )
    };
    for i in 0..n {
        let s = i as f64 * h;
        let (k1x, k1) = a_rate(data, &x, &f, s)?;
        let (x2, f2) = step(&x, &f, &k1x, &k1, h / 2.0);
        let (k2x, k2) = a_rate(data, &x2, &f2, s)?;
        let (x3, f3) = step(&x, &f, &k2x, &k2, h / 2.0);
        let (k3x, k3) = a_rate(data, &x3, &f3, s)?;
        let (x4, f4) = step(&x, &f, &k3x, &k3, h);
        let (k4x, k4) = a_rate(data, &x4, &f4, s)?;
        for q in 0..D {
            x[q] += h / 6.0 * (k1x[q] + 2.0 * k2x[q] + 2.0 * k3x[q] + k4x[q]);
        }
        let comb = k1.zip(&k2, |a, b| a + &b.scale(2.0)).zip(&k3.zip(&k4, |a, b| &a.scale(2.0) + b), |a, b| a + b);
        f = f.zip(&comb, |a, b| {
            let mut o = a.clone();
            o.axpy(h / 6.0, b);
            o
        });
        if data.domain.violation(&x).is_some() {
            return Err(GeoError::DomainExit { s: s + h });
        }
        out.samples.push(a_sample(data, &x, &f, s + h)?);
    }
    Ok(out)
}

/// Solves L^a∇_aÃ_b + Ã_a∇_bL^a = X⁻²∈_abc L^a∇^cY along each geodesic, with Ã
/// equal on the initial surface to A put in the gauge L·A = 0.
pub fn transport_a(data: &ReducedData, c: &SliceCongruence, cfg: &TransportConfig) -> Result<Vec<ATransport>> {
    c.sigmas.par_iter().map(|s| transport_one(data, c, *s, cfg)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LieQReport {
    /// max |Lie_L(X⁻²Q)|.
    pub residual: f64,
    pub q_max: f64,
    /// max |L·Ã| / max(1, |L||Ã|).
    pub l_dot_a: f64,
    pub eq_y: f64,
    /// Preconditions of the identity that failed on the samples.
    pub violated: Vec<String>,
}

/// Lie_L(X⁻²Q) along one transported geodesic: a five-point stencil for the
/// derivative along the flow plus the ∂L terms.
pub fn lie_q_residual(t: &ATransport) -> Result<LieQReport> {
    let n = t.samples.len();
    if n < 5 {
        return Err(GeoError::TooFewSamples { have: n, need: 5 });
    }
    let h = t.step;
    let p: Vec<Vec<f64>> = t
        .samples
        .iter()
        .map(|s| s.q.iter().map(|q| q / (s.xval * s.xval)).collect())
        .collect();
    let mut residual: f64 = 0.0;
    for i in 2..n - 2 {
        let sm = &t.samples[i];
        for a in 0..D {
            for b in 0..D {
                let k = a * D + b;
                let dds = (p[i - 2][k] - 8.0 * p[i - 1][k] + 8.0 * p[i + 1][k] - p[i + 2][k]) / (12.0 * h);
                let mut v = dds;
                for c in 0..D {
                    v += p[i][c * D + b] * sm.dl[a * D + c] + p[i][a * D + c] * sm.dl[b * D + c];
                }
                residual = residual.max(v.abs());
            }
        }
    }
    let q_max = t.samples.iter().fold(0.0f64, |m, s| m.max(max_abs(&s.q)));
    let l_dot_a = t
        .samples
        .iter()
        .fold(0.0f64, |m, s| m.max(s.l_dot_a.abs() / (max_abs(&s.l) * max_abs(&s.a)).max(1.0)));
    let eq_y = t.samples.iter().fold(0.0f64, |m, s| m.max(s.eq_y.abs()));
    let mut violated = Vec::new();
    if eq_y > 1e-8 {
        violated.push(format!("wave equation for Y fails by {eq_y:e}"));
    }
    if l_dot_a > 1e-8 {
        violated.push(format!("L·A = {l_dot_a:e}"));
    }
    Ok(LieQReport { residual, q_max, l_dot_a, eq_y, violated })
}

/// The geodesic field leaving N₀ = {r = r₊} along L = (2a²sin²θ − Δ)⁻¹(2a∂_r − sin⁻²θ ∂_φ).
pub fn kerr_null_field(p: KerrParameters) -> Vec<Expr> {
    let th = Expr::var(0);
    let r = Expr::var(1);
    let s2 = th.sin().powi(2);
    let delta = &r * &r + p.a * p.a - 2.0 * p.m * &r;
    let c = 1.0 / (2.0 * p.a * p.a * &s2 - delta);
    vec![Expr::c(0.0), &c * (2.0 * p.a), -(&c / &s2)]
}

pub fn kerr_horizon_congruence(p: KerrParameters, theta0: f64, sigmas: Vec<[f64; 2]>) -> SliceCongruence {
    SliceCongruence {
        base: vec![theta0, p.r_plus(), 0.0],
        directions: [vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]],
        l: kerr_null_field(p),
        sigmas,
    }
}

// ---------------------------------------------------------------------------
// Obstruction experiment along N₁.

/// Ỹ = Y + ℓε ψ((y − y(p′))/(ℓε)) with ψ(s) = (1 − |s|²)⁵ on the unit ball.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BumpAnsatz {
    pub eps: f64,
    /// Coordinate length ℓ of a unit of ε.
    pub scale: f64,
    pub center: [f64; 3],
}

impl BumpAnsatz {
    fn width(&self) -> f64 {
        self.eps * self.scale
    }

    /// Value, gradient and Hessian in y.
    pub fn eval(&self, y: [f64; 3]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let w = self.width();
        if w == 0.0 {
            return (0.0, [0.0; 3], [[0.0; 3]; 3]);
        }
        let s = [0, 1, 2].map(|i| (y[i] - self.center[i]) / w);
        let u = 1.0 - (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
        if u <= 0.0 {
            return (0.0, [0.0; 3], [[0.0; 3]; 3]);
        }
        let grad = s.map(|si| -10.0 * si * u.powi(4));
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                hess[i][j] = (-10.0 * delta * u.powi(4) + 80.0 * s[i] * s[j] * u.powi(3)) / w;
            }
        }
        (w * u.powi(5), grad, hess)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ObstructionSetup {
    pub m: f64,
    pub a: f64,
    pub theta0: f64,
    /// y² of the bump centre p′ on N₁ (y¹ = y³ = 0 there).
    pub center_y2: f64,
    pub scale: f64,
    /// Largest step in y²; the step also resolves the bump width.
    pub max_step: f64,
}

impl Default for ObstructionSetup {
    fn default() -> Self {
        ObstructionSetup {
            m: 1.0,
            a: 0.5,
            theta0: std::f64::consts::FRAC_PI_3,
            center_y2: 0.015,
            scale: 0.1,
            max_step: 1e-4,
        }
    }
}

/// Sup over the generator up to p′ of |G| + |V₂G| for the bounded coefficients.
#[derive(Clone, Copy, Debug, Default, Serialize, PartialEq)]
pub struct CoefficientBounds {
    pub gamma_211: f64,
    pub k11: f64,
    pub k11_inv: f64,
    pub gamma_123: f64,
    pub k21: f64,
    /// |F| + |V₂F| + |V₂V₂F|.
    pub f: f64,
}

impl CoefficientBounds {
    fn update(&mut self, o: &[f64; 6]) {
        let v = [&mut self.gamma_211, &mut self.k11, &mut self.k11_inv, &mut self.gamma_123, &mut self.k21, &mut self.f];
        for (slot, x) in v.into_iter().zip(o) {
            *slot = slot.max(*x);
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.gamma_211, self.k11, self.k11_inv, self.gamma_123, self.k21, self.f]
    }

    /// Largest ratio against reference bounds.
    pub fn ratio_to(&self, reference: &CoefficientBounds) -> f64 {
        self.as_array()
            .iter()
            .zip(reference.as_array())
            .fold(0.0, |m, (a, b)| m.max(a / b.max(1e-12)))
    }
}

/// Frame coefficients along N₁ from the transport ODEs.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct NullFrameSystem {
    pub gamma_211: f64,
    pub k11: f64,
    pub gamma_123: f64,
    pub k21: f64,
    pub f: f64,
    pub gamma_233: f64,
}

impl NullFrameSystem {
    fn from_slice(v: &[f64]) -> Self {
        NullFrameSystem { gamma_211: v[0], k11: v[1], gamma_123: v[2], k21: v[3], f: v[4], gamma_233: v[5] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionResult {
    pub eps: f64,
    /// p′ in (θ, r, φ₋).
    pub p_prime: Vec<f64>,
    pub phi: f64,
    pub blowup: bool,
    pub message: Option<String>,
    pub frame: Option<NullFrameSystem>,
    pub bounds: CoefficientBounds,
}

/// State along a generator: x, L, the Jacobi field V₁ and its derivative, then the frame system.
const GEO: usize = 4 * D;

struct GeneratorEnd {
    state: Vec<f64>,
    /// e₁(Ỹ) at the end point.
    e1y: f64,
    /// V₂(e₁Ỹ) and V₂V₂Ỹ at the end point.
    v2_e1y: f64,
    v2v2y: f64,
    bounds: CoefficientBounds,
}

struct Experiment {
    data: ReducedData,
    metric: MetricDescriptor,
    p: KerrParameters,
    setup: ObstructionSetup,
    l: Vec<Expr>,
}

struct Derivs {
    rate: Vec<f64>,
    /// (V₁Ỹ, V₂Ỹ, V₂V₁Ỹ, V₂V₂Ỹ)
    y: [f64; 4],
}

impl Experiment {
    fn new(setup: ObstructionSetup) -> Result<Self> {
        let q = crate::catalog::kerr_quotient(setup.m, setup.a)?;
        let data = ReducedData::from(&q);
        Ok(Experiment { metric: data.metric(), data, p: q.params, setup, l: kerr_null_field(q.params) })
    }

    fn volume_lower(&self, x: &[f64], l: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let b = connection_at(&self.metric, x, 1)?;
        let vol = -b.det.abs().sqrt();
        let low: Vec<f64> = (0..D)
            .map(|a| {
                let mut s = 0.0;
                for bb in 0..D {
                    for c in 0..D {
                        s += vol * levi(a, bb, c) * l[bb] * z[c];
                    }
                }
                s
            })
            .collect();
        Ok(b.raise(&low))
    }

    /// Initial geometry and frame data at (θ₀ + y¹, r₊, 0).
    fn initial(&self, y1: f64) -> Result<Vec<f64>> {
        let x = vec![self.setup.theta0 + y1, self.p.r_plus(), 0.0];
        let lj = self.metric.field_jets(&self.l, &x, 1)?;
        let l: Vec<f64> = lj.iter().map(|j| j.value()).collect();
        let u: Vec<f64> = lj.iter().map(|j| j.d(0)).collect();
        let w = vec![1.0, 0.0, 0.0];
        let e1 = self.volume_lower(&x, &l, &[0.0, 0.0, 1.0])?;
        let k11 = e1[0];
        let b = connection_at(&self.metric, &x, 1)?;
        // Γ_{cab} = h(∂_c, ∇_b∂_a).
        let gl = |c: usize, a: usize, bb: usize| b.gamma_low[(c * D + a) * D + bb].value();
        let g211 = k11 * k11 * (0..D).map(|c| l[c] * gl(c, 0, 0)).sum::<f64>();
        let g123 = k11 * (0..D).map(|bb| l[bb] * gl(0, bb, 2)).sum::<f64>();
        let g233 = (0..D).map(|c| l[c] * gl(c, 2, 2)).sum::<f64>();
        let f = b.g[8].value();
        let mut s = Vec::with_capacity(GEO + 6);
        s.extend_from_slice(&x);
        s.extend_from_slice(&l);
        s.extend_from_slice(&w);
        s.extend_from_slice(&u);
        s.extend_from_slice(&[g211, k11, g123, 0.0, f, g233]);
        Ok(s)
    }

    fn derivs(&self, st: &[f64], y1: f64, y2: f64, bump: &BumpAnsatz) -> Result<Derivs> {
        if !st.iter().all(|v| v.is_finite()) {
            return Err(GeoError::BlowUp { quantity: "frame system".into(), at: y2 });
        }
        let (x, l, w, u) = (&st[0..3], &st[3..6], &st[6..9], &st[9..12]);
        let fr = NullFrameSystem::from_slice(&st[GEO..]);
        if fr.k11.abs() < 1e-12 {
            return Err(GeoError::BlowUp { quantity: "1/K11".into(), at: y2 });
        }
        let b = connection_at(&self.metric, x, 2)?;
        let gam = |d: usize, a: usize, c: usize| &b.gamma[(d * D + a) * D + c];
        let mut rate = vec![0.0; st.len()];
        let mut ldot = [0.0; D];
        for d in 0..D {
            rate[d] = l[d];
            rate[6 + d] = u[d];
            let mut lacc = 0.0;
            let mut uacc = 0.0;
            for a in 0..D {
                for c in 0..D {
                    let g = gam(d, a, c);
                    lacc -= g.value() * l[a] * l[c];
                    uacc -= 2.0 * g.value() * u[a] * l[c];
                    let dg: f64 = (0..D).map(|k| g.d(k) * w[k]).sum();
                    uacc -= dg * l[a] * l[c];
                }
            }
            rate[3 + d] = lacc;
            ldot[d] = lacc;
            rate[9 + d] = uacc;
        }
        let xj = self.data.x.lift(x, 2)?;
        let yj = self.data.y.lift(x, 2)?;
        let dot = |j: &Jet, v: &[f64]| (0..D).map(|k| j.d(k) * v[k]).sum::<f64>();
        let hess = |j: &Jet, v: &[f64], w: &[f64]| {
            let mut s = 0.0;
            for i in 0..D {
                for k in 0..D {
                    let mut e = [0u8; D];
                    e[i] += 1;
                    e[k] += 1;
                    s += j.derivative(&e) * v[i] * w[k];
                }
            }
            s
        };
        let (_, bg, bh) = bump.eval([y1, y2, 0.0]);
        let xv = xj.value();
        let v2x = dot(&xj, l);
        let v1x = dot(&xj, w);
        let v2y = dot(&yj, l) + bg[1];
        let v1y = dot(&yj, w) + bg[0];
        let v2v1y = hess(&yj, l, w) + dot(&yj, u) + bh[0][1];
        let v2v2y = hess(&yj, l, l) + dot(&yj, &ldot) + bh[1][1];
        let e1x = fr.k11 * v1x + fr.k21 * v2x;
        let e1y = fr.k11 * v1y + fr.k21 * v2y;
        let x2 = 2.0 * xv * xv;
        let ric22 = (v2x * v2x + v2y * v2y) / x2;
        let ric11 = (e1x * e1x + e1y * e1y) / x2;
        let dg211 = fr.gamma_211 * fr.gamma_211 + ric22;
        let dk11 = fr.k11 * fr.gamma_211;
        let dg123 = -(v2x * e1x + v2y * e1y) / x2;
        let dk21 = 2.0 * fr.gamma_123 + fr.k21 * dk11 / fr.k11;
        let df = -2.0 * fr.gamma_233;
        let dg233 = -fr.gamma_123 * fr.gamma_123 + 0.5 * (ric11 + fr.f * ric22);
        rate[GEO..].copy_from_slice(&[dg211, dk11, dg123, dk21, df, dg233]);
        Ok(Derivs { rate, y: [v1y, v2y, v2v1y, v2v2y] })
    }

    fn run(&self, y1: f64, bump: &BumpAnsatz) -> Result<GeneratorEnd> {
        let mut st = self.initial(y1)?;
        let yc = self.setup.center_y2;
        let hmax = self.setup.max_step.min(if bump.eps > 0.0 { bump.width() / 40.0 } else { f64::INFINITY });
        let n = (yc / hmax).ceil().max(4.0) as usize;
        let h = yc / n as f64;
        let mut bounds = CoefficientBounds::default();
        let add = |s: &[f64], k: &[f64], t: f64| s.iter().zip(k).map(|(a, b)| a + t * b).collect::<Vec<f64>>();
        let record = |st: &[f64], d: &Derivs, y2: f64, bounds: &mut CoefficientBounds| -> Result<()> {
            let fr = NullFrameSystem::from_slice(&st[GEO..]);
            let r = &d.rate[GEO..];
            let worst = st[GEO..].iter().chain(r).fold(0.0f64, |m, v| m.max(v.abs()));
            if !(worst < 1e12) {
                return Err(GeoError::BlowUp { quantity: "frame system".into(), at: y2 });
            }
            bounds.update(&[
                fr.gamma_211.abs() + r[0].abs(),
                fr.k11.abs() + r[1].abs(),
                1.0 / fr.k11.abs() + (r[1] / (fr.k11 * fr.k11)).abs(),
                fr.gamma_123.abs() + r[2].abs(),
                fr.k21.abs() + r[3].abs(),
                fr.f.abs() + r[4].abs() + 2.0 * r[5].abs(),
            ]);
            Ok(())
        };
        let map_exit = |e: GeoError, y2: f64| match e {
            GeoError::SingularChart { .. } => GeoError::DomainExit { s: y2 },
            other => other,
        };
        for i in 0..n {
            let y2 = i as f64 * h;
            let k1 = self.derivs(&st, y1, y2, bump).map_err(|e| map_exit(e, y2))?;
            record(&st, &k1, y2, &mut bounds)?;
            let k2 = self.derivs(&add(&st, &k1.rate, h / 2.0), y1, y2 + h / 2.0, bump).map_err(|e| map_exit(e, y2))?;
            let k3 = self.derivs(&add(&st, &k2.rate, h / 2.0), y1, y2 + h / 2.0, bump).map_err(|e| map_exit(e, y2))?;
            let k4 = self.derivs(&add(&st, &k3.rate, h), y1, y2 + h, bump).map_err(|e| map_exit(e, y2))?;
            for q in 0..st.len() {
                st[q] += h / 6.0 * (k1.rate[q] + 2.0 * k2.rate[q] + 2.0 * k3.rate[q] + k4.rate[q]);
            }
        }
        let end = self.derivs(&st, y1, yc, bump).map_err(|e| map_exit(e, yc))?;
        record(&st, &end, yc, &mut bounds)?;
        let fr = NullFrameSystem::from_slice(&st[GEO..]);
        let r = &end.rate[GEO..];
        let [v1y, v2y, v2v1y, v2v2y] = end.y;
        Ok(GeneratorEnd {
            e1y: fr.k11 * v1y + fr.k21 * v2y,
            v2_e1y: r[1] * v1y + fr.k11 * v2v1y + r[3] * v2y + fr.k21 * v2v2y,
            v2v2y,
            state: st,
            bounds,
        })
    }

    fn phi(&self, bump: &BumpAnsatz) -> Result<(f64, GeneratorEnd)> {
        let delta = if bump.eps > 0.0 { 1e-3 * bump.width() } else { 1e-5 };
        let c = self.run(0.0, bump)?;
        let plus = self.run(delta, bump)?;
        let minus = self.run(-delta, bump)?;
        let v1_e1y = (plus.e1y - minus.e1y) / (2.0 * delta);
        let fr = NullFrameSystem::from_slice(&c.state[GEO..]);
        let e1e1y = fr.k11 * v1_e1y + fr.k21 * c.v2_e1y;
        Ok(((e1e1y - fr.f * c.v2v2y).abs(), c))
    }
}

/// Φ = |e₁(e₁Ỹ) − F e₂(e₂Ỹ)| at p′ for the bump of amplitude and width ℓε
/// (ε = 0 gives the unperturbed Kerr value).
pub fn obstruction_experiment(setup: &ObstructionSetup, eps: f64) -> Result<ObstructionResult> {
    if !(setup.a > 0.0 && setup.a < setup.m) {
        return Err(GeoError::Parameter("the obstruction experiment needs 0 < a < m".into()));
    }
    let ex = Experiment::new(*setup)?;
    let bump = BumpAnsatz { eps, scale: setup.scale, center: [0.0, setup.center_y2, 0.0] };
    if eps > 0.0 && bump.width() >= setup.center_y2 {
        return Err(GeoError::Precondition("the bump reaches N₀".into()));
    }
    match ex.phi(&bump) {
        Ok((phi, end)) => Ok(ObstructionResult {
            eps,
            p_prime: end.state[0..3].to_vec(),
            phi,
            blowup: false,
            message: None,
            frame: Some(NullFrameSystem::from_slice(&end.state[GEO..])),
            bounds: end.bounds,
        }),
        Err(e @ (GeoError::BlowUp { .. } | GeoError::DomainExit { .. })) => Ok(ObstructionResult {
            eps,
            p_prime: vec![],
            phi: f64::NAN,
            blowup: true,
            message: Some(e.to_string()),
            frame: None,
            bounds: CoefficientBounds::default(),
        }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionSweep {
    pub setup: ObstructionSetup,
    pub baseline: ObstructionResult,
    pub rows: Vec<ObstructionResult>,
    /// Φ(ε_{i+1})/Φ(ε_i) for consecutive rows.
    pub ratios: Vec<f64>,
    /// Largest coefficient bound relative to the unperturbed run.
    pub bound_ratio: f64,
}

pub fn obstruction_sweep(setup: &ObstructionSetup, eps: &[f64]) -> Result<ObstructionSweep> {
    let mut all: Vec<f64> = vec![0.0];
    all.extend_from_slice(eps);
    let mut res: Vec<ObstructionResult> = all.par_iter().map(|e| obstruction_experiment(setup, *e)).collect::<Result<_>>()?;
    let baseline = res.remove(0);
    let ratios = res.windows(2).map(|w| w[1].phi / w[0].phi).collect();
    let bound_ratio = res.iter().fold(0.0f64, |m, r| m.max(r.bounds.ratio_to(&baseline.bounds)));
    Ok(ObstructionSweep { setup: *setup, baseline, rows: res, ratios, bound_ratio })
}

/// Sweep table with columns eps, p_prime_coords, phi, blowup_flag.
pub fn write_sweep_csv<W: Write>(sweep: &ObstructionSweep, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GeoError::Input(format!("csv: {e}"));
    w.write_record(["eps", "p_prime_coords", "phi", "blowup_flag"]).map_err(io)?;
    for r in &sweep.rows {
        let coords = r.p_prime.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(" ");
        w.write_record([format!("{}", r.eps), coords, format!("{:.12e}", r.phi), r.blowup.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| GeoError::Input(format!("csv: {e}")))?;
    Ok(())
}

/// Geometric frame coefficients of unperturbed Kerr at the end of the central
/// generator: (K¹₍₁₎, K²₍₁₎, K³₍₁₎, F) from e₍₁₎ = ∈^{abc}L_bZ′_c.
pub fn kerr_frame_check(setup: &ObstructionSetup) -> Result<([f64; 4], NullFrameSystem)> {
    let ex = Experiment::new(*setup)?;
    let bump = BumpAnsatz { eps: 0.0, scale: setup.scale, center: [0.0, setup.center_y2, 0.0] };
    let end = ex.run(0.0, &bump)?;
    let st = &end.state;
    let (x, l, w) = (&st[0..3], &st[3..6], &st[6..9]);
    let e1 = ex.volume_lower(x, l, &[0.0, 0.0, 1.0])?;
    let m = nalgebra::Matrix3::new(w[0], l[0], 0.0, w[1], l[1], 0.0, w[2], l[2], 1.0);
    let k = m
        .lu()
        .solve(&nalgebra::Vector3::new(e1[0], e1[1], e1[2]))
        .ok_or(GeoError::SingularMatrix { det: 0.0 })?;
    let f = ex.metric.metric_at(x)?[8];
    Ok(([k[0], k[1], k[2], f], NullFrameSystem::from_slice(&st[GEO..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{kerr_ingoing, kerr_quotient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn kerr() -> (KerrParameters, ReducedData) {
        let q = kerr_quotient(1.0, 0.5).unwrap();
        (q.params, ReducedData::from(&q))
    }

    fn rel(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(f64::MIN_POSITIVE)
    }

    #[test]
    fn ernst_system_holds_on_kerr_grid() {
        let (p, d) = kerr();
        let grid = quotient_grid(p, 8, 8, 1e-2);
        assert!(grid.len() >= 50);
        let rep = verify_ernst_system(&d, &grid).unwrap();
        assert!(rep.worst() <= 1e-8, "{rep:?}");
        for x in &grid {
            let t = quotient_point(&d, x, None).unwrap().ernst_stress();
            assert_eq!((t[5], t[8]), (0.0, 0.0));
        }
    }

    #[test]
    fn golden_values_at_a_sample() {
        let (p, d) = kerr();
        let (th, r) = (FRAC_PI_3, 1.9);
        let q = quotient_point(&d, &[th, r, 0.0], None).unwrap();
        let (bx, by) = closed_forms::boxes(p, th, r);
        assert!(rel(q.box_x, bx, bx.abs()) < 1e-9);
        assert!(rel(q.box_y, by, by.abs()) < 1e-9);
        let ric = closed_forms::ricci(p, th, r);
        for a in 0..3 {
            for b in 0..3 {
                assert!((q.ricci[a * 3 + b] - ric[a][b]).abs() < 1e-9 * ric[1][1]);
            }
        }
        let (dx, dy) = closed_forms::gradients(p, th, r);
        for a in 0..3 {
            assert!((q.dx[a] - dx[a]).abs() < 1e-12 && (q.dy[a] - dy[a]).abs() < 1e-12);
        }
        let c = closed_forms::curl(p, th, r);
        assert!((q.curl[1] - c[0]).abs() < 1e-10);
        assert!((q.curl[5] - c[1]).abs() < 1e-10);
        assert!((q.curl[6] - c[2]).abs() < 1e-10);
    }

    #[test]
    fn ricci_at_equator() {
        let (p, d) = kerr();
        let q = quotient_point(&d, &[FRAC_PI_2, 3.0 - 1.2, 0.0], None).unwrap();
        let ric = closed_forms::ricci(p, FRAC_PI_2, 1.8);
        assert!(rel(q.ricci[0], ric[0][0], ric[0][0]) < 1e-10);
        assert!(q.ricci[8].abs() < 1e-12);
    }

    #[test]
    fn gauge_change_leaves_curl_identity() {
        let (p, d) = kerr();
        let f = Expr::var(0).sin() * Expr::var(1).powi(2) + Expr::var(2).cos() * 0.3;
        for x in quotient_grid(p, 4, 4, 1e-2) {
            let a = quotient_point(&d, &x, None).unwrap();
            let b = quotient_point(&d, &x, Some(&f)).unwrap();
            let diff = a.curl.iter().zip(&b.curl).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            assert!(diff <= 1e-9 * (1.0 + max_abs(&a.curl)), "{diff}");
        }
    }

    #[test]
    fn assembled_metric_is_kerr() {
        let (p, d) = kerr();
        let kerr = kerr_ingoing(1.0, 0.5).unwrap();
        for x in quotient_grid(p, 5, 5, 1e-2) {
            let g = assemble_spacetime(&d, &x).unwrap();
            let x4 = [x[0], x[1], x[2], 0.7];
            let a = g.metric_at(&x4).unwrap();
            let b = kerr.metric_at(&x4).unwrap();
            let scale = max_abs(&b);
            for k in 0..16 {
                assert!((a[k] - b[k]).abs() <= 1e-10 * scale, "{k}: {} vs {}", a[k], b[k]);
            }
            let (inv, det) = assembled_inverse(&d, &x).unwrap();
            let m = nalgebra::DMatrix::from_row_slice(4, 4, &a);
            let lu = m.clone().try_inverse().unwrap();
            for k in 0..16 {
                assert!((inv[k] - lu[(k / 4, k % 4)]).abs() <= 1e-10 * (1.0 + lu[(k / 4, k % 4)].abs()));
            }
            assert!(rel(det, m.determinant().abs(), det) < 1e-10);
            assert_eq!(a[15], d.x.eval(&x));
        }
    }

    #[test]
    fn assembly_rejects_nonpositive_x() {
        let (_, mut d) = kerr();
        d.x = Expr::c(-1.0);
        assert!(assemble_spacetime(&d, &[1.0, 1.9, 0.0]).is_err());
    }

    fn kerr_transport() -> (ReducedData, Vec<ATransport>) {
        let (p, d) = kerr();
        let c = kerr_horizon_congruence(p, FRAC_PI_3, vec![[0.0, 0.0], [0.05, 0.3], [-0.05, -0.2]]);
        let t = transport_a(&d, &c, &TransportConfig::default()).unwrap();
        (d, t)
    }

    #[test]
    fn transported_form_matches_gauged_kerr_form() {
        let (_, ts) = kerr_transport();
        for t in &ts {
            assert_eq!(t.samples.len(), 401);
            for s in &t.samples {
                let dev = s.a.iter().zip(&s.a_gauged).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                assert!(dev <= 1e-7 * max_abs(&s.a), "{dev} at s = {}", s.s);
                assert!(s.l_dot_a.abs() <= 1e-8 * max_abs(&s.l) * max_abs(&s.a), "{}", s.l_dot_a);
                assert!(max_abs(&s.q) <= 1e-7, "{:?}", s.q);
            }
            let lq = lie_q_residual(t).unwrap();
            assert!(lq.residual <= 1e-7 && lq.violated.is_empty(), "{lq:?}");
        }
    }

    fn flat_data(eta: f64, seed: u64) -> ReducedData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, x, y) = (Expr::var(0), Expr::var(1), Expr::var(2));
        let mut h = vec![Expr::c(0.0); 9];
        h[0] = Expr::c(-1.0);
        h[4] = Expr::c(1.0);
        h[8] = Expr::c(1.0);
        let mut c = || rng.gen_range(-1.0..1.0);
        let a_form = vec![
            &(&t * &x) * c() + &y * c() + c(),
            &(&x * &x) * c() + &t * c(),
            &(&y * &t) * c() + (&x * c()).sin(),
        ];
        ReducedData {
            h,
            x: 1.0 + 0.5 * &(&t * &t),
            y: &x * 0.3 + &y * 0.7 + &(&x * &x) * eta,
            a_form,
            domain: Domain::new(DomainKind::Everywhere),
        }
    }

    fn flat_congruence() -> SliceCongruence {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        SliceCongruence {
            base: vec![0.1, 0.2, -0.1],
            directions: [vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
            l: vec![Expr::c(s), Expr::c(s), Expr::c(0.0)],
            sigmas: vec![[0.0, 0.0], [0.3, -0.2]],
        }
    }

    #[test]
    fn twist_defect_is_lie_transported() {
        let d = flat_data(0.0, 11);
        let ts = transport_a(&d, &flat_congruence(), &TransportConfig { step: 1e-2, span: 0.5 }).unwrap();
        for t in &ts {
            let r = lie_q_residual(t).unwrap();
            assert!(r.q_max > 1e-2, "random seed should leave Q nonzero: {r:?}");
            assert!(r.residual <= 1e-7, "{r:?}");
            assert!(r.violated.is_empty());
        }
    }

    #[test]
    fn trivial_flat_data_gives_zero() {
        let mut d = flat_data(0.0, 1);
        d.x = Expr::c(1.0);
        d.y = Expr::c(0.4);
        d.a_form = vec![Expr::c(0.0); 3];
        let ts = transport_a(&d, &flat_congruence(), &TransportConfig { step: 1e-2, span: 0.1 }).unwrap();
        let r = lie_q_residual(&ts[0]).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.q_max, 0.0);
    }

    #[test]
    fn violating_the_wave_equation_shows_linearly() {
        let cfg = TransportConfig { step: 1e-2, span: 0.5 };
        let run = |eta: f64| {
            let ts = transport_a(&flat_data(eta, 11), &flat_congruence(), &cfg).unwrap();
            lie_q_residual(&ts[0]).unwrap()
        };
        let (r1, r2) = (run(1e-3), run(2e-3));
        assert!(!r1.violated.is_empty());
        assert!(r1.residual > 1e-5);
        let ratio = r2.residual / r1.residual;
        assert!((ratio - 2.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn too_short_transport_is_rejected() {
        let d = flat_data(0.0, 3);
        let ts = transport_a(&d, &flat_congruence(), &TransportConfig { step: 1e-2, span: 0.02 }).unwrap();
        assert!(matches!(lie_q_residual(&ts[0]), Err(GeoError::TooFewSamples { .. })));
    }

    #[test]
    fn bump_profile_derivatives() {
        let b = BumpAnsatz { eps: 0.1, scale: 0.1, center: [0.0, 0.5, 0.0] };
        let y = [0.003, 0.502, 0.001];
        let (v, g, hs) = b.eval(y);
        let step = 1e-6;
        for i in 0..3 {
            let mut yp = y;
            let mut ym = y;
            yp[i] += step;
            ym[i] -= step;
            let (vp, gp, _) = b.eval(yp);
            let (vm, gm, _) = b.eval(ym);
            assert!(((vp - vm) / (2.0 * step) - g[i]).abs() < 1e-6);
            for j in 0..3 {
                assert!(((gp[j] - gm[j]) / (2.0 * step) - hs[i][j]).abs() < 1e-4 * (1.0 + hs[i][j].abs()));
            }
        }
        assert!(v > 0.0);
        assert_eq!(b.eval([0.0, 0.6, 0.0]).0, 0.0);
        assert!((b.eval([0.0, 0.5, 0.0]).2[0][0] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn frame_system_reproduces_kerr_frame() {
        let setup = ObstructionSetup::default();
        let (geo, ode) = kerr_frame_check(&setup).unwrap();
        assert!((geo[0] - ode.k11).abs() < 1e-8, "{geo:?} {ode:?}");
        assert!((geo[1] - ode.k21).abs() < 1e-8, "{geo:?} {ode:?}");
        assert!(geo[2].abs() < 1e-8);
        assert!((geo[3] - ode.f).abs() < 1e-8);
    }

    #[test]
    fn initial_generator_coefficient() {
        let setup = ObstructionSetup::default();
        let ex = Experiment::new(setup).unwrap();
        let s = ex.initial(0.0).unwrap();
        let expect = (1.0f64 - 0.25).sqrt() / 0.5;
        assert!((s[GEO + 5] - expect).abs() < 1e-12);
        assert!(s[GEO + 4].abs() < 1e-12);
        // ∇_{∂φ}∂φ = −((m/a)² − 1)^{1/2}∂φ along N₀.
        let b = connection_at(&ex.metric, &s[0..3], 1).unwrap();
        let g = b.christoffel();
        assert!((g.get(&[2, 2, 2]) + 3f64.sqrt()).abs() < 1e-10);
        assert!(g.get(&[0, 2, 2]).abs() < 1e-10 && g.get(&[1, 2, 2]).abs() < 1e-10);
    }

    #[test]
    fn phi_scales_like_inverse_width() {
        let setup = ObstructionSetup::default();
        let sweep = obstruction_sweep(&setup, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
        assert!(sweep.baseline.phi.is_finite() && !sweep.baseline.blowup);
        for r in &sweep.ratios {
            assert!((1.4..=2.6).contains(r), "{:?}", sweep.ratios);
        }
        for w in sweep.rows.windows(2) {
            assert!(w[1].phi > w[0].phi);
        }
        // The bounds are uniform in ε: they settle as the bump shrinks.
        let first = sweep.rows[0].bounds;
        for r in &sweep.rows[1..] {
            assert!(r.bounds.ratio_to(&first) <= 2.0, "{:?}", r.bounds);
        }
        let mut buf = Vec::new();
        write_sweep_csv(&sweep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eps,p_prime_coords,phi,blowup_flag\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
