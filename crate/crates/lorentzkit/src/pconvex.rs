//! Quantitative strong pseudo-convexity of a level set {f = 0} at a point.
//!
//! The certificate follows the compactness construction: δ₀ is the minimum of
//! −∇²f over unit null directions tangent to the level set, n₀ makes
//! −∇²f + n₀(df)² positive on the whole null cone, and μ is placed just above
//! the lower end of the interval of ρ for which −∇²f + n₀(df)² + ρg is
//! positive definite. The witnesses (μ, A₁) are the first valid pair found,
//! not canonical ones.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::MetricDescriptor;
use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::jet::exponent;
use crate::tensor::connection_at;

const N: usize = 4;

#[derive(Clone, Debug)]
pub struct DefiningFunction {
    pub f: Expr,
    pub p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchConfig {
    /// Samples on the circle of tangent null directions.
    pub circle_samples: usize,
    /// (polar, azimuthal) grid on the sphere of null directions.
    pub sphere_grid: (usize, usize),
    /// |δ₀| below this is undecided unless a witness settles it.
    pub band: f64,
    /// Radius handed to [`verify_neighborhood`] when certifying.
    pub neighborhood_radius: f64,
    pub neighborhood_points: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            circle_samples: 720,
            sphere_grid: (360, 720),
            band: 1e-8,
            neighborhood_radius: 0.1,
            neighborhood_points: 64,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudoconvexCertificate {
    pub verdict: Verdict,
    pub point: Vec<f64>,
    /// None when no nonzero null direction is tangent to the level set.
    pub delta0: Option<f64>,
    pub n0: u64,
    pub rho0: f64,
    pub n1: u64,
    pub mu: f64,
    pub a1: f64,
    /// Derivative bound of g and f at the point (orders 1 to 4).
    pub a_bound: f64,
    /// Smallest eigenvalue of μg − ∇²f + n₀ df⊗df in coordinate components.
    pub margin: f64,
    pub grad_norm: f64,
    pub eps1: Option<f64>,
    /// Unit null direction tangent to the level set with ∇²f(X, X) ≥ 0 (refutations).
    pub witness: Option<Vec<f64>>,
    pub witness_hessian: Option<f64>,
    pub note: String,
}

/// g, ∇f and ∇²f at a point, coordinate components.
#[derive(Clone, Debug)]
pub struct PointData {
    pub g: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub a_bound: f64,
}

fn deriv_sum(j: &crate::jet::Jet, lo: usize) -> f64 {
    let mut fact = [1.0f64; 5];
    for k in 1..5 {
        fact[k] = fact[k - 1] * k as f64;
    }
    j.coeffs()
        .iter()
        .enumerate()
        .map(|(s, c)| {
            let deg: usize = exponent(j.dim(), s).iter().map(|e| *e as usize).sum();
            if deg >= lo {
                fact[deg] * c.abs()
            } else {
                0.0
            }
        })
        .sum()
}

pub fn point_data(metric: &MetricDescriptor, f: &Expr, x: &[f64]) -> Result<PointData> {
    if metric.dim() != N {
        return Err(GeoError::Input("pseudo-convexity needs a 4-dimensional metric".into()));
    }
    metric.domain.check(x)?;
    let b = connection_at(metric, x, 1)?;
    let fj = f.lift(x, 4)?;
    let grad: Vec<f64> = (0..N).map(|a| fj.d(a)).collect();
    let mut hess = vec![0.0; N * N];
    for a in 0..N {
        for c in 0..N {
            let mut e = [0u8; N];
            e[a] += 1;
            e[c] += 1;
            let mut v = fj.derivative(&e);
            for d in 0..N {
                v -= b.gamma[(d * N + a) * N + c].value() * grad[d];
            }
            hess[a * N + c] = v;
        }
    }
    let gj = metric.metric_jets(x, 4)?;
    let a_bound = 1f64.max(gj.iter().map(|j| deriv_sum(j, 1)).sum::<f64>() + deriv_sum(&fj, 1));
    Ok(PointData {
        g: b.g_val(),
        grad,
        hess,
        a_bound,
    })
}

fn quad(m: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            s += m[i * N + j] * x[i] * x[j];
        }
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn lambda_min(m: &[f64]) -> f64 {
    let mm = DMatrix::from_row_slice(N, N, m);
    let sym = (&mm + mm.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Frame (E₀ timelike, E₁..E₃ spacelike) orthonormal for g, as coordinate vectors.
fn orthonormal_frame(g: &[f64]) -> Result<[Vec<f64>; 4]> {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(N, N, g));
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for i in 0..N {
        let l = eig.eigenvalues[i];
        if l.abs() < 1e-14 {
            return Err(GeoError::SingularMatrix { det: 0.0 });
        }
        let v: Vec<f64> = (0..N).map(|k| eig.eigenvectors[(k, i)] / l.abs().sqrt()).collect();
        if l < 0.0 {
            neg.push(v);
        } else {
            pos.push(v);
        }
    }
    if neg.len() != 1 {
        return Err(GeoError::Input("metric is not Lorentzian at the point".into()));
    }
    Ok([neg[0].clone(), pos[0].clone(), pos[1].clone(), pos[2].clone()])
}

fn frame_vector(e: &[Vec<f64>; 4], n: [f64; 3]) -> Vec<f64> {
    (0..N)
        .map(|k| e[0][k] + n[0] * e[1][k] + n[1] * e[2][k] + n[2] * e[3][k])
        .collect()
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimum of `q` over unit null directions, by grid search and pattern refinement.
fn cone_min(e: &[Vec<f64>; 4], grid: (usize, usize), q: &(dyn Fn(&[f64]) -> f64 + Sync)) -> (f64, Vec<f64>) {
    let eval = |th: f64, ph: f64| {
        let x = frame_vector(e, [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
        let nx = norm(&x);
        let xs: Vec<f64> = x.iter().map(|v| v / nx).collect();
        (q(&xs), xs)
    };
    let (nt, np) = grid;
    let dth = std::f64::consts::PI / nt as f64;
    let dph = 2.0 * std::f64::consts::PI / np as f64;
    let (i0, j0, _) = (0..=nt)
        .into_par_iter()
        .map(|i| {
            let mut best = (i, 0, f64::INFINITY);
            for j in 0..np {
                let v = eval(i as f64 * dth, j as f64 * dph).0;
                if v < best.2 {
                    best = (i, j, v);
                }
            }
            best
        })
        .reduce(|| (0, 0, f64::INFINITY), |a, b| if b.2 < a.2 { b } else { a });
    let (mut th, mut ph) = (i0 as f64 * dth, j0 as f64 * dph);
    let (mut best, mut bx) = eval(th, ph);
    let (mut st, mut sp) = (dth, dph);
    while st > 1e-12 {
        let mut moved = false;
        for (a, b) in [(st, 0.0), (-st, 0.0), (0.0, sp), (0.0, -sp)] {
            let (v, x) = eval(th + a, ph + b);
            if v < best {
                best = v;
                bx = x;
                th += a;
                ph += b;
                moved = true;
                break;
            }
        }
        if !moved {
            st *= 0.5;
            sp *= 0.5;
        }
    }
    (best, bx)
}

/// δ₀ with its minimizing direction; None when the constraint set is empty.
fn tangent_null_min(pd: &PointData, e: &[Vec<f64>; 4], samples: usize) -> Option<(f64, Vec<f64>)> {
    let a = dot(&pd.grad, &e[0]);
    let b = [dot(&pd.grad, &e[1]), dot(&pd.grad, &e[2]), dot(&pd.grad, &e[3])];
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if nb < 1e-14 || a.abs() > nb * (1.0 + 1e-12) {
        return None;
    }
    let bh = [b[0] / nb, b[1] / nb, b[2] / nb];
    let c = (-a / nb).clamp(-1.0, 1.0);
    let r = (1.0 - c * c).max(0.0).sqrt();
    // Orthonormal pair spanning the plane orthogonal to b̂.
    let k = if bh[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let kd = k[0] * bh[0] + k[1] * bh[1] + k[2] * bh[2];
    let mut e1 = [k[0] - kd * bh[0], k[1] - kd * bh[1], k[2] - kd * bh[2]];
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = [
        bh[1] * e1[2] - bh[2] * e1[1],
        bh[2] * e1[0] - bh[0] * e1[2],
        bh[0] * e1[1] - bh[1] * e1[0],
    ];
    let hmin: Vec<f64> = pd.hess.iter().map(|v| -v).collect();
    let dir = |phi: f64| {
        let n = [0, 1, 2].map(|i| c * bh[i] + r * (phi.cos() * e1[i] + phi.sin() * e2[i]));
        let x = frame_vector(e, n);
        let nx = norm(&x);
        x.iter().map(|v| v / nx).collect::<Vec<f64>>()
    };
    let val = |phi: f64| quad(&hmin, &dir(phi));
    if r < 1e-12 {
        let x = dir(0.0);
        return Some((quad(&hmin, &x), x));
    }
    let step = 2.0 * std::f64::consts::PI / samples as f64;
    let (k0, _) = (0..samples)
        .map(|i| (i, val(i as f64 * step)))
        .fold((0, f64::INFINITY), |m, (i, v)| if v < m.1 { (i, v) } else { m });
    let phi0 = k0 as f64 * step;
    let (phi, v) = golden_min(val, phi0 - step, phi0 + step, 80);
    Some((v, dir(phi)))
}

/// Certifies or refutes strong pseudo-convexity of {f < 0} at `df.p`.
pub fn check_pseudoconvexity(
    metric: &MetricDescriptor,
    df: &DefiningFunction,
    cfg: &SearchConfig,
) -> Result<PseudoconvexCertificate> {
    let pd = point_data(metric, &df.f, &df.p)?;
    let grad_norm: f64 = pd.grad.iter().map(|v| v.abs()).sum();
    if grad_norm < 1e-8 {
        return Err(GeoError::Precondition(format!(
            "critical point of f (|df| = {grad_norm:e})"
        )));
    }
    let e = orthonormal_frame(&pd.g)?;
    let h: Vec<f64> = pd.hess.iter().map(|v| -v).collect();
    let mut cert = PseudoconvexCertificate {
        verdict: Verdict::Inconclusive,
        point: df.p.clone(),
        delta0: None,
        n0: 0,
        rho0: 0.0,
        n1: 0,
        mu: 0.0,
        a1: 0.0,
        a_bound: pd.a_bound,
        margin: 0.0,
        grad_norm,
        eps1: None,
        witness: None,
        witness_hessian: None,
        note: String::new(),
    };

    let tangent = tangent_null_min(&pd, &e, cfg.circle_samples);
    if let Some((d0, x)) = &tangent {
        cert.delta0 = Some(*d0);
        if *d0 < cfg.band {
            let gn = norm(&pd.grad);
            let tangency = dot(&x, &pd.grad).abs() / gn;
            let nullity = quad(&pd.g, x).abs();
            let hess = quad(&pd.hess, x);
            let settled = tangency <= 1e-10 && nullity <= 1e-10 && hess >= -1e-10;
            if *d0 <= -cfg.band || settled {
                cert.verdict = Verdict::Refuted;
                cert.witness = Some(x.clone());
                cert.witness_hessian = Some(hess);
                cert.note = "null direction tangent to the level set with nonnegative Hessian".into();
            } else {
                cert.note = "minimum over tangent null directions is within the undecided band".into();
            }
            return Ok(cert);
        }
    } else {
        cert.note = "no null direction is tangent to the level set; the condition holds vacuously".into();
    }

    // Positivity of h + n(Xf)² on the whole null cone.
    let target = 0.5 * tangent.as_ref().map(|t| t.0).unwrap_or(1.0);
    let mut n0: u64 = 1;
    loop {
        let nf = n0 as f64;
        let q = |x: &[f64]| quad(&h, x) + nf * dot(x, &pd.grad).powi(2);
        let (m, _) = cone_min(&e, cfg.sphere_grid, &q);
        if m >= target {
            break;
        }
        if n0 >= 1 << 30 {
            cert.note = "no n0 up to 2^30 makes the null-cone form positive".into();
            return Ok(cert);
        }
        n0 *= 2;
    }
    cert.n0 = n0;

    let form = |rho: f64, n: f64| -> Vec<f64> {
        (0..N * N)
            .map(|k| h[k] + n * pd.grad[k / N] * pd.grad[k % N] + rho * pd.g[k])
            .collect()
    };
    let lam = |rho: f64| lambda_min(&form(rho, n0 as f64));
    let hnorm = lambda_min(&pd.hess).abs().max(lambda_min(&h).abs());
    let mut rho1 = 10.0 * (hnorm + 1.0);
    let (rho_star, lmax) = loop {
        let (r, v) = golden_min(|r| -lam(r), -rho1, rho1, 200);
        if -v > 0.0 {
            break (r, -v);
        }
        if rho1 > (1u64 << 30) as f64 {
            cert.note = "no ρ makes the form positive definite".into();
            return Ok(cert);
        }
        rho1 *= 2.0;
    };
    let _ = lmax;
    // λ is concave in ρ: bisect for its lower zero.
    let (mut lo, mut hi) = (-rho1, rho_star);
    while lam(lo) > 0.0 {
        lo -= rho1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lam(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rho0 = lo;
    let mut n1: u64 = 1;
    while lam(rho0 + 1.0 / n1 as f64) <= 0.0 {
        n1 *= 2;
        if n1 > 1 << 40 {
            cert.note = "positivity interval for ρ is too thin".into();
            return Ok(cert);
        }
    }
    let mu = rho0 + 1.0 / n1 as f64;
    let margin = lam(mu);
    let a1 = [n0 as f64, 1.0 / margin, pd.a_bound, 1.0 / grad_norm, mu.abs(), 1.0]
        .into_iter()
        .fold(0.0, f64::max);
    cert.rho0 = rho0;
    cert.n1 = n1;
    cert.mu = mu;
    cert.margin = margin;
    cert.a1 = a1;
    cert.verdict = Verdict::Certified;
    let nb = verify_neighborhood(&cert, metric, df, cfg.neighborhood_radius, cfg.neighborhood_points, cfg.seed);
    cert.eps1 = nb.certified_radius;
    Ok(cert)
}

/// Left side minus right side of the second quantitative inequality for
/// one direction X at a point: X(μg − ∇²f)X + A₁(Xf)² − c|X|².
pub fn quantitative_margin(pd: &PointData, mu: f64, a1: f64, c: f64, x: &[f64]) -> f64 {
    let mut form = vec![0.0; N * N];
    for k in 0..N * N {
        form[k] = mu * pd.g[k] - pd.hess[k];
    }
    quad(&form, x) + a1 * dot(x, &pd.grad).powi(2) - c * dot(x, x)
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub x: Vec<f64>,
    pub radius: f64,
    /// "gradient", "form" or a domain message.
    pub kind: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeighborhoodCheck {
    pub holds_at_requested: bool,
    /// Largest tested radius (requested, then halved) at which every sample passed.
    pub certified_radius: Option<f64>,
    pub first_violation: Option<Violation>,
}

fn violation_at(
    cert: &PseudoconvexCertificate,
    metric: &MetricDescriptor,
    f: &Expr,
    x: &[f64],
) -> Option<(String, f64)> {
    let pd = match point_data(metric, f, x) {
        Ok(pd) => pd,
        Err(e) => return Some((e.to_string(), f64::NAN)),
    };
    let bound = 0.5 / cert.a1;
    let gn: f64 = pd.grad.iter().map(|v| v.abs()).sum();
    if gn < bound {
        return Some(("gradient".into(), gn));
    }
    let form: Vec<f64> = (0..N * N)
        .map(|k| cert.mu * pd.g[k] - pd.hess[k] + cert.a1 * pd.grad[k / N] * pd.grad[k % N])
        .collect();
    let l = lambda_min(&form);
    if l < bound {
        return Some(("form".into(), l));
    }
    None
}

/// Samples the persisted inequalities in balls around the point, halving the
/// radius until they hold everywhere sampled or the radius drops below 1e−6.
pub fn verify_neighborhood(
    cert: &PseudoconvexCertificate,
    metric: &MetricDescriptor,
    df: &DefiningFunction,
    radius: f64,
    points: usize,
    seed: u64,
) -> NeighborhoodCheck {
    let mut out = NeighborhoodCheck {
        holds_at_requested: false,
        certified_radius: None,
        first_violation: None,
    };
    if cert.verdict != Verdict::Certified {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..N {
        for s in [-1.0, 1.0] {
            let mut v = vec![0.0; N];
            v[i] = s;
            dirs.push(v);
        }
    }
    while dirs.len() < points + 2 * N {
        let v: Vec<f64> = (0..N).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if dot(&v, &v) <= 1.0 {
            dirs.push(v);
        }
    }
    let mut r = radius;
    let mut first = true;
    while r >= 1e-6 {
        let fail = dirs.iter().find_map(|d| {
            let x: Vec<f64> = (0..N).map(|k| df.p[k] + r * d[k]).collect();
            violation_at(cert, metric, &df.f, &x).map(|(kind, value)| Violation { x, radius: r, kind, value })
        });
        match fail {
            None => {
                out.holds_at_requested = first;
                out.certified_radius = Some(r);
                return out;
            }
            Some(v) => {
                if out.first_violation.is_none() {
                    out.first_violation = Some(v);
                }
            }
        }
        first = false;
        r *= 0.5;
    }
    out
}

/// max |g^{αβ}∂_αu ∂_βu| over the samples.
pub fn optical_residual(metric: &MetricDescriptor, u: &Expr, samples: &[Vec<f64>]) -> Result<f64> {
    let n = metric.dim();
    let mut worst: f64 = 0.0;
    for x in samples {
        metric.domain.check(x)?;
        let g = DMatrix::from_row_slice(n, n, &metric.metric_at(x)?);
        let det = g.determinant();
        let gi = g.try_inverse().ok_or(GeoError::SingularMatrix { det })?;
        let uj = u.lift(x, 1)?;
        let du: Vec<f64> = (0..n).map(|a| uj.d(a)).collect();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += gi[(a, b)] * du[a] * du[b];
            }
        }
        worst = worst.max(f64::abs(s));
    }
    Ok(worst)
}

/// The defining function (ū + ε₀)(u + ε₀) of the double-null chart.
pub fn double_null_product(eps0: f64) -> Expr {
    (Expr::var(1) + eps0) * (Expr::var(0) + eps0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{kerr_ingoing, minkowski, KerrParameters, MinkowskiChart};

    fn fast() -> SearchConfig {
        SearchConfig {
            sphere_grid: (90, 180),
            ..SearchConfig::default()
        }
    }

    #[test]
    fn null_hyperplane_is_refuted() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let df = DefiningFunction { f: Expr::var(0) - Expr::var(1), p: vec![0.0; 4] };
        let c = check_pseudoconvexity(&m, &df, &fast()).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);
        let x = c.witness.unwrap();
        assert!((x[0] - x[1]).abs() < 1e-10);
        assert!(c.witness_hessian.unwrap().abs() < 1e-12);
        // The witness is proportional to ∇f = (1, 1, 0, 0) after raising.
        assert!(x[2].abs() < 1e-10 && x[3].abs() < 1e-10);
    }

    #[test]
    fn spacelike_plane_is_certified_vacuously() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let df = DefiningFunction { f: Expr::var(0), p: vec![0.0; 4] };
        let c = check_pseudoconvexity(&m, &df, &fast()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(c.delta0.is_none());
        assert!(c.mu > 0.0 || c.mu.abs() <= c.a1);
        let nb = verify_neighborhood(&c, &m, &df, 100.0, 32, 1);
        assert!(nb.holds_at_requested);
    }

    #[test]
    fn timelike_cylinder_is_refuted_or_certified_by_curvature_sign() {
        // {r < 1} in Minkowski: tangent null directions see ∇²r ≥ 0, so the
        // inside is not pseudo-convex; the outside {r > 1} (f = 1 − r) is.
        let m = minkowski(MinkowskiChart::Cartesian);
        let r = (Expr::var(1).powi(2) + Expr::var(2).powi(2) + Expr::var(3).powi(2)).sqrt();
        let p = vec![0.0, 1.0, 0.0, 0.0];
        let inside = DefiningFunction { f: &r - 1.0, p: p.clone() };
        let c = check_pseudoconvexity(&m, &inside, &fast()).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);
        let outside = DefiningFunction { f: Expr::c(1.0) - &r, p };
        let c = check_pseudoconvexity(&m, &outside, &fast()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!((c.delta0.unwrap() - 0.5).abs() < 1e-9, "{:?}", c.delta0);
    }

    #[test]
    fn double_null_product_is_certified_locally() {
        let m = minkowski(MinkowskiChart::DoubleNull);
        let df = DefiningFunction { f: double_null_product(0.05), p: vec![0.0; 4] };
        let c = check_pseudoconvexity(&m, &df, &fast()).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(c.a1.is_finite() && c.a1 >= c.a_bound && c.mu.abs() <= c.a1);
        let pd = point_data(&m, &df.f, &df.p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = norm(&x);
            let x: Vec<f64> = x.iter().map(|v| v / n).collect();
            assert!(quantitative_margin(&pd, c.mu, c.a1, 0.9 / c.a1, &x) >= 0.0);
        }
        assert!(verify_neighborhood(&c, &m, &df, 0.01, 64, 1).holds_at_requested);
        let far = verify_neighborhood(&c, &m, &df, 10.0, 64, 1);
        assert!(!far.holds_at_requested);
        assert!(far.first_violation.is_some());
    }

    #[test]
    fn critical_point_is_rejected() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let df = DefiningFunction { f: Expr::var(1).powi(2), p: vec![0.0; 4] };
        assert!(matches!(check_pseudoconvexity(&m, &df, &fast()), Err(GeoError::Precondition(_))));
    }

    #[test]
    fn optical_functions() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let s = vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0, -1.0, 0.5, 0.0]];
        assert_eq!(optical_residual(&m, &(Expr::var(0) - Expr::var(1)), &s).unwrap(), 0.0);

        let k = kerr_ingoing(1.0, 0.5).unwrap();
        let p = KerrParameters::new(1.0, 0.5).unwrap();
        let rp = p.r_plus();
        let on: Vec<Vec<f64>> = [0.6, 1.0, 1.4, 2.2].iter().map(|&th| vec![th, rp, 0.3, 0.0]).collect();
        assert!(optical_residual(&k, &(Expr::var(1) - rp), &on).unwrap() <= 1e-9);
        let off: Vec<Vec<f64>> = [1.2, 1.5].iter().map(|&th| vec![th, rp + 0.05, 0.0, 0.0]).collect();
        assert!(optical_residual(&k, &(Expr::var(1) - (rp + 0.05)), &off).unwrap() > 1e-3);
    }

    fn verdict(f: Expr, p: Vec<f64>) -> Verdict {
        let m = minkowski(MinkowskiChart::Cartesian);
        let cfg = SearchConfig { sphere_grid: (45, 90), neighborhood_points: 8, ..SearchConfig::default() };
        check_pseudoconvexity(&m, &DefiningFunction { f, p }, &cfg).unwrap().verdict
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn verdict_ignores_choice_of_defining_function(c in 0.1f64..10.0, k in -2.0f64..2.0, which in 0usize..3) {
            let r = (Expr::var(1).powi(2) + Expr::var(2).powi(2) + Expr::var(3).powi(2)).sqrt();
            let (f, p) = match which {
                0 => (Expr::var(0) - Expr::var(1), vec![0.0; 4]),
                1 => (Expr::c(1.0) - &r, vec![0.0, 1.0, 0.0, 0.0]),
                _ => (Expr::var(0) + &Expr::var(1) * 0.3, vec![0.0; 4]),
            };
            let base = verdict(f.clone(), p.clone());
            proptest::prop_assert_eq!(verdict(&f * c, p.clone()), base);
            let smooth = Expr::c(1.0) + &Expr::var(2) * k;
            proptest::prop_assert_eq!(verdict(&f + &(&f * &f) * &smooth, p), base);
        }
    }
}
