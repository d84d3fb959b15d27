//! Closed-form metrics: Kerr (Boyer–Lindquist and ingoing), Minkowski charts,
//! and the Kerr quotient data (h, X, Y, A) on the u₋ = 0 slice.

use std::fmt;
use std::sync::Arc;

use crate::error::{GeoError, Result};
use crate::expr::{hash_exprs, Evaluator, Expr};
use crate::jet::Jet;

pub const DEFAULT_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KerrParameters {
    pub m: f64,
    pub a: f64,
}

impl KerrParameters {
    pub fn new(m: f64, a: f64) -> Result<Self> {
        if !(m > 0.0) || !(a >= 0.0) || !(a < m) {
            return Err(GeoError::Parameter(format!(
                "Kerr parameters need 0 <= a < m, got m = {m}, a = {a}"
            )));
        }
        Ok(KerrParameters { m, a })
    }

    pub fn delta(&self, r: f64) -> f64 {
        r * r + self.a * self.a - 2.0 * self.m * r
    }

    pub fn q2(&self, r: f64, th: f64) -> f64 {
        r * r + self.a * self.a * th.cos().powi(2)
    }

    pub fn sigma2(&self, r: f64, th: f64) -> f64 {
        let a2 = self.a * self.a;
        (r * r + a2) * self.q2(r, th) + 2.0 * self.m * r * a2 * th.sin().powi(2)
    }

    pub fn r_plus(&self) -> f64 {
        self.m + (self.m * self.m - self.a * self.a).sqrt()
    }

    /// 2mr − q², positive in the ergo-region.
    pub fn ergo(&self, r: f64, th: f64) -> f64 {
        2.0 * self.m * r - self.q2(r, th)
    }
}

pub type Predicate = Arc<dyn Fn(&[f64], f64) -> Option<String> + Send + Sync>;

#[derive(Clone)]
pub enum DomainKind {
    Everywhere,
    /// (t, r, θ, φ) spherical chart.
    Polar,
    /// Exterior Boyer–Lindquist chart (t, r, θ, φ).
    KerrBl(KerrParameters),
    /// 2mr − q² > 0 with θ the first coordinate and r the second.
    KerrErgo(KerrParameters),
    Custom(String, Predicate),
}

impl fmt::Debug for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Everywhere => write!(f, "Everywhere"),
            DomainKind::Polar => write!(f, "Polar"),
            DomainKind::KerrBl(p) => write!(f, "KerrBl({p:?})"),
            DomainKind::KerrErgo(p) => write!(f, "KerrErgo({p:?})"),
            DomainKind::Custom(n, _) => write!(f, "Custom({n})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub kind: DomainKind,
    pub margin: f64,
}

impl Domain {
    pub fn new(kind: DomainKind) -> Self {
        Domain {
            kind,
            margin: DEFAULT_MARGIN,
        }
    }

    /// Reason the point is outside the open domain, if it is.
    pub fn violation(&self, x: &[f64]) -> Option<String> {
        let eps = self.margin;
        if x.iter().any(|v| !v.is_finite()) {
            return Some("non-finite coordinate".into());
        }
        match &self.kind {
            DomainKind::Everywhere => None,
            DomainKind::Polar => {
                if x[1] <= eps {
                    Some("r = 0".into())
                } else if x[2].sin() <= eps {
                    Some("sin(theta) = 0".into())
                } else {
                    None
                }
            }
            DomainKind::KerrBl(p) => {
                let (r, th) = (x[1], x[2]);
                if th.sin() <= eps {
                    Some("sin(theta) = 0".into())
                } else if r <= eps {
                    Some("r <= 0".into())
                } else if p.delta(r) <= eps {
                    Some("Delta <= 0".into())
                } else {
                    None
                }
            }
            DomainKind::KerrErgo(p) => {
                let (th, r) = (x[0], x[1]);
                if th.sin() <= eps {
                    Some("sin(theta) = 0".into())
                } else if r <= eps {
                    Some("r <= 0".into())
                } else if p.ergo(r, th) <= eps {
                    Some("2mr - q^2 <= 0".into())
                } else {
                    None
                }
            }
            DomainKind::Custom(_, pred) => pred(x, eps),
        }
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        match self.violation(x) {
            None => Ok(()),
            Some(reason) => Err(GeoError::SingularChart {
                reason,
                point: x.to_vec(),
            }),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.violation(x).is_none()
    }
}

#[derive(Clone, Debug)]
pub struct MetricDescriptor {
    pub name: String,
    pub coords: Vec<String>,
    pub params: Vec<(String, f64)>,
    /// Row-major components g_{αβ}; symmetric.
    pub g: Vec<Expr>,
    pub domain: Domain,
    pub vectors: Vec<(String, Vec<Expr>)>,
    pub scalars: Vec<(String, Expr)>,
}

impl MetricDescriptor {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.domain.margin = margin;
        self
    }

    pub fn hash(&self) -> String {
        hash_exprs(&self.g)
    }

    pub fn vector(&self, name: &str) -> Option<&[Expr]> {
        self.vectors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn scalar(&self, name: &str) -> Option<&Expr> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    /// Metric component jets of the given order at x (row-major).
    pub fn metric_jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.domain.check(x)?;
        let n = self.dim();
        let vars = crate::expr::variables(x, order);
        let mut ev = Evaluator::new(&vars);
        let mut out = vec![Jet::zero(n, order); n * n];
        for i in 0..n {
            for j in i..n {
                let v = ev.eval(&self.g[i * n + j])?;
                out[j * n + i] = v.clone();
                out[i * n + j] = v;
            }
        }
        Ok(out)
    }

    /// Jets of the components of a vector or scalar list at x.
    pub fn field_jets(&self, exprs: &[Expr], x: &[f64], order: usize) -> Result<Vec<Jet>> {
        self.domain.check(x)?;
        let vars = crate::expr::variables(x, order);
        let mut ev = Evaluator::new(&vars);
        exprs.iter().map(|e| Ok(ev.eval(e)?)).collect()
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.domain.check(x)?;
        Ok(self.g.iter().map(|e| e.eval(x)).collect())
    }

    /// Numbers of negative and positive eigenvalues of g at x.
    pub fn signature(&self, x: &[f64]) -> Result<(usize, usize)> {
        let n = self.dim();
        let g = self.metric_at(x)?;
        let m = nalgebra::DMatrix::from_row_slice(n, n, &g);
        let eig = m.symmetric_eigen();
        let neg = eig.eigenvalues.iter().filter(|&&v| v < 0.0).count();
        let pos = eig.eigenvalues.iter().filter(|&&v| v > 0.0).count();
        Ok((neg, pos))
    }
}

fn sym(n: usize, entries: &[(usize, usize, Expr)]) -> Vec<Expr> {
    let mut g = vec![Expr::c(0.0); n * n];
    for (i, j, e) in entries {
        g[i * n + j] = e.clone();
        g[j * n + i] = e.clone();
    }
    g
}

fn unit(n: usize, i: usize) -> Vec<Expr> {
    (0..n)
        .map(|k| Expr::c(if k == i { 1.0 } else { 0.0 }))
        .collect()
}

struct KerrExprs {
    s: Expr,
    c: Expr,
    q2: Expr,
    delta: Expr,
    sigma2: Expr,
    ergo: Expr,
}

fn kerr_exprs(p: KerrParameters, th: &Expr, r: &Expr) -> KerrExprs {
    let (m, a) = (p.m, p.a);
    let s = th.sin();
    let c = th.cos();
    let q2 = r * r + a * a * c.powi(2);
    let delta = r * r + (a * a) - 2.0 * m * r;
    let r2a2 = r * r + (a * a);
    let sigma2 = &r2a2 * &q2 + 2.0 * m * a * a * r * s.powi(2);
    let ergo = 2.0 * m * r - &q2;
    KerrExprs {
        s,
        c,
        q2,
        delta,
        sigma2,
        ergo,
    }
}

fn kerr_params(p: KerrParameters) -> Vec<(String, f64)> {
    vec![("m".into(), p.m), ("a".into(), p.a)]
}

/// Kerr in Boyer–Lindquist coordinates (t, r, θ, φ).
pub fn kerr_bl(m: f64, a: f64) -> Result<MetricDescriptor> {
    let p = KerrParameters::new(m, a)?;
    let r = Expr::var(1);
    let th = Expr::var(2);
    let k = kerr_exprs(p, &th, &r);
    let s2 = k.s.powi(2);
    let gtt = -(&k.q2 * &k.delta) / &k.sigma2
        + 4.0 * a * a * m * m * r.powi(2) * &s2 / (&k.q2 * &k.sigma2);
    let gtp = -(2.0 * a * m * &r * &s2) / &k.q2;
    let gpp = &k.sigma2 * &s2 / &k.q2;
    let grr = &k.q2 / &k.delta;
    let g = sym(
        4,
        &[
            (0, 0, gtt),
            (0, 3, gtp),
            (3, 3, gpp),
            (1, 1, grr),
            (2, 2, k.q2.clone()),
        ],
    );
    Ok(MetricDescriptor {
        name: if a == 0.0 { "schwarzschild".into() } else { "kerr_bl".into() },
        coords: vec!["t".into(), "r".into(), "theta".into(), "phi".into()],
        params: kerr_params(p),
        g,
        domain: Domain::new(DomainKind::KerrBl(p)),
        vectors: vec![("T".into(), unit(4, 0)), ("Z".into(), unit(4, 3))],
        scalars: vec![],
    })
}

pub fn schwarzschild(m: f64) -> Result<MetricDescriptor> {
    kerr_bl(m, 0.0)
}

/// Kerr in the ingoing coordinates (θ, r, φ₋, u₋).
pub fn kerr_ingoing(m: f64, a: f64) -> Result<MetricDescriptor> {
    let p = KerrParameters::new(m, a)?;
    let th = Expr::var(0);
    let r = Expr::var(1);
    let k = kerr_exprs(p, &th, &r);
    let s2 = k.s.powi(2);
    let g = sym(
        4,
        &[
            (0, 0, k.q2.clone()),
            (3, 1, Expr::c(-1.0)),
            (2, 1, a * &s2),
            (2, 3, -(2.0 * a * m * &r * &s2) / &k.q2),
            (2, 2, &k.sigma2 * &s2 / &k.q2),
            (3, 3, &k.ergo / &k.q2),
        ],
    );
    let mut l_in = vec![Expr::c(0.0); 4];
    l_in[1] = Expr::c(-1.0);
    Ok(MetricDescriptor {
        name: "kerr_ingoing".into(),
        coords: vec!["theta".into(), "r".into(), "phi".into(), "u".into()],
        params: kerr_params(p),
        g,
        domain: Domain::new(DomainKind::KerrErgo(p)),
        vectors: vec![
            ("T".into(), unit(4, 3)),
            ("Z".into(), unit(4, 2)),
            ("L".into(), l_in),
        ],
        scalars: vec![("r".into(), r.clone())],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinkowskiChart {
    Cartesian,
    Polar,
    DoubleNull,
}

/// Minkowski space. The double-null chart uses u = (t − x)/√2, ū = (t + x)/√2,
/// so that g(∇u, ∇ū) = −1.
pub fn minkowski(chart: MinkowskiChart) -> MetricDescriptor {
    match chart {
        MinkowskiChart::Cartesian => {
            let (x, y, z) = (Expr::var(1), Expr::var(2), Expr::var(3));
            let rot_xy = vec![Expr::c(0.0), -&y, x.clone(), Expr::c(0.0)];
            let rot_yz = vec![Expr::c(0.0), Expr::c(0.0), -&z, y.clone()];
            MetricDescriptor {
                name: "minkowski".into(),
                coords: vec!["t".into(), "x".into(), "y".into(), "z".into()],
                params: vec![],
                g: sym(
                    4,
                    &[
                        (0, 0, Expr::c(-1.0)),
                        (1, 1, Expr::c(1.0)),
                        (2, 2, Expr::c(1.0)),
                        (3, 3, Expr::c(1.0)),
                    ],
                ),
                domain: Domain::new(DomainKind::Everywhere),
                vectors: vec![
                    ("T".into(), unit(4, 0)),
                    ("rotation_xy".into(), rot_xy),
                    ("rotation_yz".into(), rot_yz),
                ],
                scalars: vec![],
            }
        }
        MinkowskiChart::Polar => {
            let r = Expr::var(1);
            let s = Expr::var(2).sin();
            MetricDescriptor {
                name: "minkowski_polar".into(),
                coords: vec!["t".into(), "r".into(), "theta".into(), "phi".into()],
                params: vec![],
                g: sym(
                    4,
                    &[
                        (0, 0, Expr::c(-1.0)),
                        (1, 1, Expr::c(1.0)),
                        (2, 2, r.powi(2)),
                        (3, 3, r.powi(2) * s.powi(2)),
                    ],
                ),
                domain: Domain::new(DomainKind::Polar),
                vectors: vec![("T".into(), unit(4, 0)), ("Z".into(), unit(4, 3))],
                scalars: vec![("r".into(), r)],
            }
        }
        MinkowskiChart::DoubleNull => MetricDescriptor {
            name: "minkowski_double_null".into(),
            coords: vec!["u".into(), "ubar".into(), "y".into(), "z".into()],
            params: vec![],
            g: sym(
                4,
                &[
                    (0, 1, Expr::c(-1.0)),
                    (2, 2, Expr::c(1.0)),
                    (3, 3, Expr::c(1.0)),
                ],
            ),
            domain: Domain::new(DomainKind::Everywhere),
            vectors: vec![(
                "rotation_yz".into(),
                vec![Expr::c(0.0), Expr::c(0.0), -Expr::var(3), Expr::var(2)],
            )],
            scalars: vec![("u".into(), Expr::var(0)), ("ubar".into(), Expr::var(1))],
        },
    }
}

/// Stationary reduction of Kerr on the slice u₋ = 0, coordinates (θ, r, φ₋).
#[derive(Clone, Debug)]
pub struct QuotientData {
    pub params: KerrParameters,
    pub h: Vec<Expr>,
    pub x: Expr,
    pub y: Expr,
    pub a_form: Vec<Expr>,
    pub domain: Domain,
}

impl QuotientData {
    /// The quotient metric h as a 3-dimensional descriptor.
    pub fn metric(&self) -> MetricDescriptor {
        MetricDescriptor {
            name: "kerr_quotient".into(),
            coords: vec!["theta".into(), "r".into(), "phi".into()],
            params: kerr_params(self.params),
            g: self.h.clone(),
            domain: self.domain.clone(),
            vectors: vec![("Z".into(), unit(3, 2))],
            scalars: vec![("X".into(), self.x.clone()), ("Y".into(), self.y.clone())],
        }
    }

    pub fn hash(&self) -> String {
        hash_exprs(
            self.h
                .iter()
                .chain([&self.x, &self.y])
                .chain(self.a_form.iter()),
        )
    }
}

pub fn kerr_quotient(m: f64, a: f64) -> Result<QuotientData> {
    let p = KerrParameters::new(m, a)?;
    if a <= 0.0 {
        return Err(GeoError::Parameter("the quotient construction needs a > 0".into()));
    }
    let th = Expr::var(0);
    let r = Expr::var(1);
    let k = kerr_exprs(p, &th, &r);
    let s2 = k.s.powi(2);
    let h = sym(
        3,
        &[
            (0, 0, k.ergo.clone()),
            (1, 1, Expr::c(-1.0)),
            (1, 2, -(a * &s2)),
            (2, 2, -(&k.delta * &s2)),
        ],
    );
    let x = &k.ergo / &k.q2;
    let y = -(2.0 * m * a * &k.c) / &k.q2;
    let a_form = vec![
        Expr::c(0.0),
        -(&k.q2 / &k.ergo),
        -(2.0 * a * m * &r * &s2) / &k.ergo,
    ];
    Ok(QuotientData {
        params: p,
        h,
        x,
        y,
        a_form,
        domain: Domain::new(DomainKind::KerrErgo(p)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    #[test]
    fn schwarzschild_limit() {
        let g = kerr_bl(1.0, 0.0).unwrap();
        let x = [0.0, 5.0, 1.0, 0.3];
        let gtt = g.metric_at(&x).unwrap()[0];
        assert!((gtt + (1.0 - 2.0 / 5.0)).abs() < 1e-15);
    }

    #[test]
    fn ingoing_cross_term() {
        let g = kerr_ingoing(1.0, 0.5).unwrap();
        let v = g.metric_at(&[1.0, 1.5, 0.0, 0.0]).unwrap();
        assert_eq!(v[3 * 4 + 1], -1.0);
        assert_eq!(v[1 * 4 + 3], -1.0);
    }

    #[test]
    fn ingoing_norm_of_t() {
        let g = kerr_ingoing(1.0, 0.5).unwrap();
        let v = g.metric_at(&[FRAC_PI_2, 1.0, 0.0, 0.0]).unwrap();
        assert!((v[15] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quotient_values() {
        let q = kerr_quotient(1.0, 0.5).unwrap();
        let p = q.params;
        let x = [FRAC_PI_3, p.r_plus(), 0.0];
        assert!((q.h[5].eval(&x) + 0.375).abs() < 1e-15);
        assert!(q.y.eval(&[FRAC_PI_2, 1.5, 0.0]).abs() < 1e-15);
        let rp = p.r_plus();
        let want = -rp * rp / (2.0 * rp - rp * rp);
        assert!((q.a_form[1].eval(&[FRAC_PI_2, rp, 0.0]) - want).abs() < 1e-12);
    }

    #[test]
    fn horizon_radius() {
        let p = KerrParameters::new(1.0, 0.6).unwrap();
        assert!((p.r_plus() - 1.8).abs() < 1e-15);
        assert!(p.delta(p.r_plus()).abs() < 1e-14);
    }

    #[test]
    fn parameter_guard() {
        assert!(kerr_bl(1.0, 1.0).is_err());
        assert!(kerr_quotient(1.0, 0.0).is_err());
    }

    #[test]
    fn domain_guard_reports_axis() {
        let g = kerr_ingoing(1.0, 0.5).unwrap();
        let err = g.metric_jets(&[0.0, 1.5, 0.0, 0.0], 2).unwrap_err();
        assert!(matches!(err, GeoError::SingularChart { .. }));
    }

    #[test]
    fn lorentzian_signature() {
        let g = kerr_bl(1.0, 0.5).unwrap();
        assert_eq!(g.signature(&[0.0, 4.0, 1.0, 0.0]).unwrap(), (1, 3));
        let q = kerr_quotient(1.0, 0.5).unwrap().metric();
        assert_eq!(q.signature(&[1.0, 1.9, 0.0]).unwrap(), (1, 2));
    }
}
