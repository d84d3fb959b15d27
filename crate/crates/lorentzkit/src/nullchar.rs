//! Characteristic data on a null hypersurface N₀ with coordinates (y¹, y², y⁴)
//! and L = ∂₄: the conformal metric ĥ, the constraint ODE for the conformal
//! factor φ, the null second fundamental form, and the certificate that a
//! Killing germ cannot extend once ĥ is deformed.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::MetricDescriptor;
use crate::error::{GeoError, Result};
use crate::expr::{hash_exprs, Expr};
use crate::jet::Jet;
use crate::report::max_abs;
use crate::tensor::connection_at;

/// Index of y⁴ among the N₀ coordinates (y¹, y², y⁴).
const Y4: usize = 2;

/// Unit-determinant symmetric 2-tensor ĥ on N₀, components (ĥ₁₁, ĥ₁₂, ĥ₂₂)
/// as expressions in (y¹, y², y⁴).
#[derive(Clone, Debug)]
pub struct ConformalData {
    pub hhat: [Expr; 3],
}

impl ConformalData {
    /// ĥ = diag(e^s, e^{−s}).
    pub fn from_shear(s: &Expr) -> Self {
        ConformalData { hhat: [s.exp(), Expr::c(0.0), (-s).exp()] }
    }

    pub fn flat() -> Self {
        ConformalData { hhat: [Expr::c(1.0), Expr::c(0.0), Expr::c(1.0)] }
    }

    pub fn hash(&self) -> String {
        hash_exprs(self.hhat.iter())
    }

    pub fn det(&self, y: &[f64]) -> f64 {
        let [a, b, c] = self.values(y);
        a * c - b * b
    }

    fn values(&self, y: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|k| self.hhat[k].eval(y))
    }

    /// Jets of (ĥ₁₁, ĥ₁₂, ĥ₂₂) at y.
    pub fn jets(&self, y: &[f64], order: usize) -> Result<[Jet; 3]> {
        let vars = crate::expr::variables(y, order);
        let mut ev = crate::expr::Evaluator::new(&vars);
        Ok([ev.eval(&self.hhat[0])?, ev.eval(&self.hhat[1])?, ev.eval(&self.hhat[2])?])
    }

    pub fn check_unimodular(&self, y: &[f64], tol: f64) -> Result<()> {
        let d = self.det(y);
        if (d - 1.0).abs() > tol {
            return Err(GeoError::Precondition(format!("det ĥ = {d} at {y:?}")));
        }
        let [a, _, _] = self.values(y);
        if !(a > 0.0) {
            return Err(GeoError::Precondition(format!("ĥ is not positive definite at {y:?}")));
        }
        Ok(())
    }
}

fn mat(c: [f64; 3]) -> [[f64; 2]; 2] {
    [[c[0], c[1]], [c[1], c[2]]]
}

fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

/// ĥ^{ab}ĥ^{cd}∂₄ĥ_{ad}∂₄ĥ_{bc}, i.e. tr((ĥ⁻¹∂₄ĥ)²).
fn shear_source(h: [[f64; 2]; 2], dh: [[f64; 2]; 2]) -> f64 {
    let hi = inv2(h);
    let mut s = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    s += hi[a][b] * hi[c][d] * dh[a][d] * dh[b][c];
                }
            }
        }
    }
    s
}

fn point_source(data: &ConformalData, y: &[f64]) -> Result<([[f64; 2]; 2], [[f64; 2]; 2], f64)> {
    let j = data.jets(y, 1)?;
    let h = mat([j[0].value(), j[1].value(), j[2].value()]);
    let dh = mat([j[0].d(Y4), j[1].d(Y4), j[2].d(Y4)]);
    Ok((h, dh, shear_source(h, dh)))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PhiConfig {
    pub phi0: f64,
    pub dphi0: f64,
    /// Starting value of y⁴.
    pub start: f64,
    pub span: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratorSample {
    pub y4: f64,
    pub phi: f64,
    pub dphi: f64,
    /// trχ from χ = ½∂₄(φ²ĥ) traced with h.
    pub trchi: f64,
    /// |χ̂|_h.
    pub chihat_norm: f64,
    /// |trχ − 2φ⁻¹∂₄φ| + |χ̂ − ½φ²∂₄ĥ|.
    pub identity_residual: f64,
    pub source: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiProfile {
    pub generator: [f64; 2],
    pub step: f64,
    pub samples: Vec<GeneratorSample>,
    /// y⁴ where φ reaches 0, if it does before the end of the span.
    pub focal: Option<f64>,
}

fn sample(data: &ConformalData, y: &[f64], phi: f64, dphi: f64) -> Result<GeneratorSample> {
    let (hh, dhh, src) = point_source(data, y)?;
    let p2 = phi * phi;
    let mut h = [[0.0; 2]; 2];
    let mut chi = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            h[a][b] = p2 * hh[a][b];
            chi[a][b] = phi * dphi * hh[a][b] + 0.5 * p2 * dhh[a][b];
        }
    }
    let hi = inv2(h);
    let tr: f64 = (0..4).map(|k| hi[k / 2][k % 2] * chi[k / 2][k % 2]).sum();
    let mut chihat = [[0.0; 2]; 2];
    let mut dev: f64 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            chihat[a][b] = chi[a][b] - 0.5 * tr * h[a][b];
            dev = dev.max((chihat[a][b] - 0.5 * p2 * dhh[a][b]).abs());
        }
    }
    let mut n2 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    n2 += hi[a][c] * hi[b][d] * chihat[a][b] * chihat[c][d];
                }
            }
        }
    }
    Ok(GeneratorSample {
        y4: y[Y4],
        phi,
        dphi,
        trchi: tr,
        chihat_norm: n2.max(0.0).sqrt(),
        identity_residual: (tr - 2.0 * dphi / phi).abs() + dev,
        source: src,
    })
}

/// Integrates ∂₄²φ = −(1/8)φ ĥ^{ab}ĥ^{cd}∂₄ĥ_{ad}∂₄ĥ_{bc} along the generator
/// through (y¹, y²), stopping at a focal point φ = 0.
pub fn solve_phi(data: &ConformalData, generator: [f64; 2], cfg: &PhiConfig) -> Result<PhiProfile> {
    if !(cfg.phi0 > 0.0) {
        return Err(GeoError::Input(format!("phi0 = {} must be positive", cfg.phi0)));
    }
    if !(cfg.step > 0.0 && cfg.span > 0.0) {
        return Err(GeoError::Input("step and span must be positive".into()));
    }
    let n = (cfg.span / cfg.step).round().max(1.0) as usize;
    let h = cfg.span / n as f64;
    let at = |y4: f64| [generator[0], generator[1], y4];
    data.check_unimodular(&at(cfg.start), 1e-12)?;
    let rate = |y4: f64, s: [f64; 2]| -> Result<[f64; 2]> {
        let (_, _, src) = point_source(data, &at(y4))?;
        Ok([s[1], -0.125 * s[0] * src])
    };
    let mut st = [cfg.phi0, cfg.dphi0];
    let mut out = PhiProfile { generator, step: h, samples: vec![sample(data, &at(cfg.start), st[0], st[1])?], focal: None };
    for i in 0..n {
        let y4 = cfg.start + i as f64 * h;
        let k1 = rate(y4, st)?;
        let k2 = rate(y4 + h / 2.0, [st[0] + h / 2.0 * k1[0], st[1] + h / 2.0 * k1[1]])?;
        let k3 = rate(y4 + h / 2.0, [st[0] + h / 2.0 * k2[0], st[1] + h / 2.0 * k2[1]])?;
        let k4 = rate(y4 + h, [st[0] + h * k3[0], st[1] + h * k3[1]])?;
        let next = [0, 1].map(|q| st[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]));
        if next[0] <= 0.0 {
            out.focal = Some(y4 + h * st[0] / (st[0] - next[0]));
            break;
        }
        st = next;
        out.samples.push(sample(data, &at(y4 + h), st[0], st[1])?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintCheck {
    /// max |∂₄trχ + ½(trχ)² + |χ̂|²|.
    pub raychaudhuri: f64,
    /// max |∂₄²φ + (1/8)φ S|.
    pub phi_equation: f64,
    /// max |∂₄(h^{ad}∂₄h_{ad}) + ½h^{ab}h^{cd}∂₄h_{ad}∂₄h_{bc}|.
    pub trace_equation: f64,
    /// max |trace_equation − 4φ⁻¹ phi_equation| over the samples.
    pub equivalence: f64,
    pub identities: f64,
}

/// Checks the solved profile with five-point differences along the generator.
pub fn check_constraints(p: &PhiProfile) -> Result<ConstraintCheck> {
    let s = &p.samples;
    let n = s.len();
    if n < 5 {
        return Err(GeoError::TooFewSamples { have: n, need: 5 });
    }
    let h = p.step;
    let d1 = |f: &dyn Fn(&GeneratorSample) -> f64, i: usize| {
        (f(&s[i - 2]) - 8.0 * f(&s[i - 1]) + 8.0 * f(&s[i + 1]) - f(&s[i + 2])) / (12.0 * h)
    };
    let d2 = |f: &dyn Fn(&GeneratorSample) -> f64, i: usize| {
        (-f(&s[i - 2]) + 16.0 * f(&s[i - 1]) - 30.0 * f(&s[i]) + 16.0 * f(&s[i + 1]) - f(&s[i + 2])) / (12.0 * h * h)
    };
    let mut out = ConstraintCheck { raychaudhuri: 0.0, phi_equation: 0.0, trace_equation: 0.0, equivalence: 0.0, identities: 0.0 };
    for i in 2..n - 2 {
        let q = &s[i];
        let ray = d1(&|g| g.trchi, i) + 0.5 * q.trchi * q.trchi + q.chihat_norm * q.chihat_norm;
        let r4 = d2(&|g| g.phi, i) + 0.125 * q.phi * q.source;
        // h^{ad}∂₄h_{ad} = 4φ⁻¹∂₄φ and ½ tr((h⁻¹∂₄h)²) = 4(φ⁻¹∂₄φ)² + S/2.
        let r3 = d1(&|g| 4.0 * g.dphi / g.phi, i) + 4.0 * (q.dphi / q.phi).powi(2) + 0.5 * q.source;
        out.raychaudhuri = out.raychaudhuri.max(ray.abs());
        out.phi_equation = out.phi_equation.max(r4.abs());
        out.trace_equation = out.trace_equation.max(r3.abs());
        out.equivalence = out.equivalence.max((r3 - 4.0 * r4 / q.phi).abs());
    }
    out.identities = s.iter().fold(0.0, |m, q| m.max(q.identity_residual));
    Ok(out)
}

/// Profile table with columns y4, phi, trchi, chihat_norm.
pub fn write_profile_csv<W: Write>(p: &PhiProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| GeoError::Input(format!("csv: {e}"));
    w.write_record(["y4", "phi", "trchi", "chihat_norm"]).map_err(io)?;
    for s in &p.samples {
        w.write_record([s.y4, s.phi, s.trchi, s.chihat_norm].map(|v| format!("{v:.12e}")))
            .map_err(io)?;
    }
    w.flush().map_err(|e| GeoError::Input(format!("csv: {e}")))?;
    Ok(())
}

/// Null second fundamental form of a hypersurface with null normal L at x.
#[derive(Clone, Debug, Serialize)]
pub struct SecondForm {
    pub chi: [[f64; 2]; 2],
    pub trchi: f64,
    pub chihat: [[f64; 2]; 2],
    pub null_residual: f64,
    pub tangency_residual: f64,
}

/// χ(X, Y) = g(∇_X L, Y) on the span of `tangents`.
pub fn second_ff(metric: &MetricDescriptor, x: &[f64], l: &[Expr], tangents: [&[f64]; 2]) -> Result<SecondForm> {
    let n = metric.dim();
    let b = connection_at(metric, x, 1)?;
    let lj = metric.field_jets(l, x, 1)?;
    let lv: Vec<f64> = lj.iter().map(|j| j.value()).collect();
    let null_residual = b.inner(&lv, &lv).abs();
    let tangency_residual = tangents.iter().fold(0.0f64, |m, e| m.max(b.inner(&lv, e).abs()));
    let scale = max_abs(&lv).max(1.0);
    if null_residual > 1e-6 * scale * scale || tangency_residual > 1e-6 * scale {
        return Err(GeoError::Precondition(format!(
            "L is not a null normal: g(L, L) = {null_residual:e}, g(L, e) = {tangency_residual:e}"
        )));
    }
    let nabla = |e: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|c| {
                let mut v = 0.0;
                for a in 0..n {
                    v += e[a] * lj[c].d(a);
                    for bb in 0..n {
                        v += e[a] * b.gamma[(c * n + a) * n + bb].value() * lv[bb];
                    }
                }
                v
            })
            .collect()
    };
    let mut chi = [[0.0; 2]; 2];
    let mut h = [[0.0; 2]; 2];
    for a in 0..2 {
        let dl = nabla(tangents[a]);
        for c in 0..2 {
            chi[a][c] = b.inner(&dl, tangents[c]);
            h[a][c] = b.inner(tangents[a], tangents[c]);
        }
    }
    let hi = inv2(h);
    let trchi: f64 = (0..4).map(|k| hi[k / 2][k % 2] * chi[k / 2][k % 2]).sum();
    let mut chihat = [[0.0; 2]; 2];
    for a in 0..2 {
        for c in 0..2 {
            chihat[a][c] = chi[a][c] - 0.5 * trchi * h[a][c];
        }
    }
    Ok(SecondForm { chi, trchi, chihat, null_residual, tangency_residual })
}

/// ω with ∇_L L = ωL, and the size of the part of ∇_L L not along L.
pub fn acceleration(metric: &MetricDescriptor, x: &[f64], l: &[Expr]) -> Result<(f64, f64)> {
    let n = metric.dim();
    let b = connection_at(metric, x, 1)?;
    let lj = metric.field_jets(l, x, 1)?;
    let lv: Vec<f64> = lj.iter().map(|j| j.value()).collect();
    let acc: Vec<f64> = (0..n)
        .map(|c| {
            let mut v = 0.0;
            for a in 0..n {
                v += lv[a] * lj[c].d(a);
                for bb in 0..n {
                    v += b.gamma[(c * n + a) * n + bb].value() * lv[a] * lv[bb];
                }
            }
            v
        })
        .collect();
    let k = (0..n).max_by(|&i, &j| lv[i].abs().total_cmp(&lv[j].abs())).unwrap_or(0);
    let omega = acc[k] / lv[k];
    let off = (0..n).fold(0.0f64, |m, c| m.max((acc[c] - omega * lv[c]).abs()));
    Ok((omega, off))
}

#[derive(Clone, Debug, Serialize)]
pub struct OmegaCheck {
    /// max |ω| over samples with |trχ| above the threshold.
    pub omega_max: f64,
    /// max |ω·trχ|.
    pub product_max: f64,
    /// Samples where trχ was treated as zero.
    pub vanishing_trchi: usize,
    pub samples: usize,
}

/// The auxiliary condition ω·trχ = 0 along generators of a null hypersurface,
/// sampled at `points` with tangent frames.
pub fn omega_trchi_check(
    metric: &MetricDescriptor,
    l: &[Expr],
    points: &[(Vec<f64>, [Vec<f64>; 2])],
    trchi_floor: f64,
) -> Result<OmegaCheck> {
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .map(|(x, e)| {
            let (om, _) = acceleration(metric, x, l)?;
            let ff = second_ff(metric, x, l, [&e[0], &e[1]])?;
            Ok((om, ff.trchi))
        })
        .collect::<Result<_>>()?;
    let mut c = OmegaCheck { omega_max: 0.0, product_max: 0.0, vanishing_trchi: 0, samples: rows.len() };
    for (om, tr) in rows {
        c.product_max = c.product_max.max((om * tr).abs());
        if tr.abs() > trchi_floor {
            c.omega_max = c.omega_max.max(om.abs());
        } else {
            c.vanishing_trchi += 1;
        }
    }
    Ok(c)
}

/// ψ(|y − c|/w) with ψ(s) = (1 − s²)⁵ for s < 1 and 0 beyond, as an expression in (y¹, y², y⁴).
pub fn bump(amplitude: f64, center: [f64; 3], width: f64) -> Expr {
    let mut r2 = Expr::c(0.0);
    for (k, c) in center.iter().enumerate() {
        let d = (Expr::var(k) - *c) / width;
        r2 = r2 + &d * &d;
    }
    (1.0 - r2).pos_powi(5) * amplitude
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extendibility {
    ExtendibleConsistent,
    Obstructed,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateConfig {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    /// Grid points per axis.
    pub points: usize,
    /// y⁴ of the slice in N₀ ∩ O₋ where the germ is read off.
    pub germ_y4: f64,
    pub threshold: f64,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        CertificateConfig {
            lower: [-1.0, -1.0, 0.0],
            upper: [1.0, 1.0, 1.0],
            points: 9,
            germ_y4: -0.5,
            threshold: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionCertificate {
    pub verdict: Extendibility,
    /// max |Lie_Z ĥ − (∂₁Z¹ + ∂₂Z²)ĥ| over samples where ĥ differs from the reference.
    pub residual: f64,
    /// Same maximum over all samples.
    pub residual_all: f64,
    pub witness: Option<Vec<f64>>,
    pub z_at_witness: Option<Vec<f64>>,
    pub samples: usize,
    pub data_hash: String,
    pub reference_hash: String,
}

/// Z over N₀ from [L, Z] = 0 with L = ∂₄: each component keeps its value on
/// the germ slice along the generator. Returned as jets in (y¹, y², y⁴).
pub fn propagate_z(germ: &[Expr], germ_y4: f64, y: &[f64]) -> Result<Vec<Jet>> {
    let at = [y[0], y[1], germ_y4];
    germ.iter()
        .map(|e| {
            let mut j = e.lift(&at, 1)?;
            j.coeffs_mut()[1 + Y4] = 0.0;
            Ok(j)
        })
        .collect()
}

/// Lie_Z ĥ − (∂₁Z¹ + ∂₂Z²)ĥ at y, components (11, 12, 22).
pub fn conformal_killing_residual(data: &ConformalData, z: &[Jet], y: &[f64]) -> Result<[f64; 3]> {
    let hj = data.jets(y, 1)?;
    let h = mat([hj[0].value(), hj[1].value(), hj[2].value()]);
    let dh = |k: usize| mat([hj[0].d(k), hj[1].d(k), hj[2].d(k)]);
    let dz = |c: usize, a: usize| z[c].d(a);
    let div = dz(0, 0) + dz(1, 1);
    let pairs = [(0, 0), (0, 1), (1, 1)];
    Ok(pairs.map(|(a, b)| {
        let mut v = 0.0;
        for k in 0..3 {
            v += z[k].value() * dh(k)[a][b];
        }
        for c in 0..2 {
            v += dz(c, a) * h[c][b] + dz(c, b) * h[a][c];
        }
        v - div * h[a][b]
    }))
}

fn grid(cfg: &CertificateConfig) -> Vec<Vec<f64>> {
    let n = cfg.points.max(2);
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let t = [i, j, k].map(|q| q as f64 / (n - 1) as f64);
                out.push((0..3).map(|d| cfg.lower[d] + t[d] * (cfg.upper[d] - cfg.lower[d])).collect());
            }
        }
    }
    out
}

/// Evaluates the conformal Killing condition for the propagated germ
/// over a grid of N₀. The germ must satisfy it for the reference on the O₋ slice,
/// and the data must agree with the reference there.
pub fn obstruction_certificate(
    data: &ConformalData,
    reference: &ConformalData,
    germ: &[Expr],
    cfg: &CertificateConfig,
) -> Result<ObstructionCertificate> {
    if germ.len() != 3 {
        return Err(GeoError::Input(format!("Z germ needs 3 components, got {}", germ.len())));
    }
    if cfg.germ_y4 >= cfg.lower[Y4].min(0.0) {
        return Err(GeoError::Input("the germ slice must lie on the O₋ side (y⁴ < 0)".into()));
    }
    let n = cfg.points.max(2);
    let slice: Vec<[f64; 3]> = (0..n * n)
        .map(|q| {
            let t = [(q / n) as f64 / (n - 1) as f64, (q % n) as f64 / (n - 1) as f64];
            [0, 1, 2].map(|d| if d == Y4 { cfg.germ_y4 } else { cfg.lower[d] + t[d] * (cfg.upper[d] - cfg.lower[d]) })
        })
        .collect();
    for y in &slice {
        let z = propagate_z(germ, cfg.germ_y4, y)?;
        let r = conformal_killing_residual(reference, &z, y)?;
        if max_abs(&r) > 1e-9 {
            return Err(GeoError::Precondition(format!("the germ is not conformally Killing for the reference at {y:?}")));
        }
        let (a, b) = (data.values(y), reference.values(y));
        if (0..3).any(|k| (a[k] - b[k]).abs() > 1e-12) {
            return Err(GeoError::Precondition(format!("data differ from the reference on the O₋ side at {y:?}")));
        }
        data.check_unimodular(y, 1e-12)?;
    }
    let pts = grid(cfg);
    let rows: Vec<(f64, bool, Vec<f64>)> = pts
        .par_iter()
        .map(|y| {
            data.check_unimodular(y, 1e-12)?;
            let z = propagate_z(germ, cfg.germ_y4, y)?;
            let r = max_abs(&conformal_killing_residual(data, &z, y)?);
            let (a, b) = (data.values(y), reference.values(y));
            let differs = (0..3).any(|k| (a[k] - b[k]).abs() > 1e-12);
            Ok((r, differs, z.iter().map(|j| j.value()).collect()))
        })
        .collect::<Result<_>>()?;
    let mut cert = ObstructionCertificate {
        verdict: Extendibility::ExtendibleConsistent,
        residual: 0.0,
        residual_all: 0.0,
        witness: None,
        z_at_witness: None,
        samples: rows.len(),
        data_hash: data.hash(),
        reference_hash: reference.hash(),
    };
    for (y, (r, differs, z)) in pts.iter().zip(rows) {
        cert.residual_all = cert.residual_all.max(r);
        if differs && r > cert.residual {
            cert.residual = r;
            cert.witness = Some(y.clone());
            cert.z_at_witness = Some(z);
        }
    }
    if cert.residual > cfg.threshold {
        cert.verdict = Extendibility::Obstructed;
    } else {
        cert.witness = None;
        cert.z_at_witness = None;
    }
    Ok(cert)
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinedCertificate {
    pub coarse: ObstructionCertificate,
    pub fine: ObstructionCertificate,
    pub stable: bool,
}

/// The certificate on the configured grid and on one with twice the resolution.
pub fn certificate_with_refinement(
    data: &ConformalData,
    reference: &ConformalData,
    germ: &[Expr],
    cfg: &CertificateConfig,
) -> Result<RefinedCertificate> {
    let coarse = obstruction_certificate(data, reference, germ, cfg)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.points = 2 * cfg.points.max(2) - 1;
    let fine = obstruction_certificate(data, reference, germ, &fine_cfg)?;
    let stable = coarse.verdict == fine.verdict;
    Ok(RefinedCertificate { coarse, fine, stable })
}
