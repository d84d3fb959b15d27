//! Extension of a vector field off a seed hypersurface by the geodesic
//! transport system ∇_L∇_L Z = R(L, Z)L, with the 2-form ω transported
//! alongside, and the tensors π, ω, B, Ḃ, P, W built from the extension.
//!
//! Every transported quantity is carried as a jet in the spacetime
//! coordinates centred at the moving point. If F solves L^μ∂_μF = G then its
//! jet F̂ at x(s) obeys dF̂/ds = Ĝ − (L̂ − L(x(s)))^μ ∂_μF̂, which closes at
//! every truncation order. Transverse derivatives of the extension therefore
//! come out of the integration itself.

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::MetricDescriptor;
use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::jet::{exponent, invert_matrix, Jet};
use crate::tensor::{
    cov_derivative, curvature_at, lie_derivative, unflatten, CurvatureBundle, JetTensor, Slot,
    TensorValue,
};

/// Jet order carried for L, Z and ∇_L Z; ω is carried one order lower.
pub const TRANSPORT_ORDER: usize = 2;
const METRIC_ORDER: usize = TRANSPORT_ORDER + 2;
const N: usize = 4;
const CAUSTIC_DET: f64 = 1e-10;

/// Affine 3-parameter patch x = base + σ_i d_i of the seed hypersurface.
#[derive(Clone, Debug)]
pub struct Patch {
    pub base: Vec<f64>,
    pub directions: [Vec<f64>; 3],
}

impl Patch {
    pub fn point(&self, sigma: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (d, s) in self.directions.iter().zip(sigma) {
            for (xi, di) in x.iter_mut().zip(d) {
                *xi += s * di;
            }
        }
        x
    }
}

/// How ∇_L Z is prescribed on the seed patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SeedMode {
    /// ∇_L Z of the given field itself.
    Field,
    /// The unique ∇_L Z making L^β π_{αβ} vanish on the patch, computed from
    /// the tangential derivatives of Z. Agrees with `Field` for Killing fields.
    DeformationCompatible,
}

#[derive(Clone, Debug)]
pub struct Seed {
    pub z: Vec<Expr>,
    pub mode: SeedMode,
}

/// Geodesics leaving the patch at the parameters `sigmas` with initial tangent `l`.
#[derive(Clone, Debug)]
pub struct Congruence {
    pub patch: Patch,
    pub l: Vec<Expr>,
    pub sigmas: Vec<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExtensionConfig {
    pub step: f64,
    pub span: f64,
    /// Keep every n-th step as a sample.
    pub sample_every: usize,
}

impl Default for ExtensionConfig {
    fn default() -> Self {
        ExtensionConfig {
            step: 1e-3,
            span: 0.05,
            sample_every: 1,
        }
    }
}

/// Pointwise tensors of an extension. Covariant indices throughout except
/// `dl` (∇_a L^b) and `g_inv`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureTensors {
    pub dz: TensorValue,
    pub pi: TensorValue,
    pub omega: TensorValue,
    pub b: TensorValue,
    pub bdot: TensorValue,
    pub p: TensorValue,
    pub lie_r: TensorValue,
    pub w: TensorValue,
    pub riemann: TensorValue,
    pub dl: TensorValue,
    pub gamma: TensorValue,
    pub g_inv: TensorValue,
    /// ∇^α W_{αβγδ}.
    pub div_w: TensorValue,
    /// B^{μν}∇_νR_{μβγδ} + ½(P contractions with R), the divergence of W
    /// in vacuum.
    pub div_rhs: TensorValue,
    pub curvature_scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtensionSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub l: Vec<f64>,
    pub z: Vec<f64>,
    pub jacobian_det: f64,
    pub tensors: StructureTensors,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtendedGeodesic {
    pub sigma: [f64; 3],
    pub spacing: f64,
    pub samples: Vec<ExtensionSample>,
}

impl ExtendedGeodesic {
    pub fn sup<F: Fn(&ExtensionSample) -> f64>(&self, f: F) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(f(s)))
    }
}

#[derive(Clone, Debug)]
struct Fields {
    l: Vec<Jet>,
    z: Vec<Jet>,
    y: Vec<Jet>,
    /// ω_{ab}, row-major.
    om: Vec<Jet>,
}

impl Fields {
    fn zip(&self, o: &Fields, f: impl Fn(&Jet, &Jet) -> Jet) -> Fields {
        let m = |a: &[Jet], b: &[Jet]| a.iter().zip(b).map(|(x, y)| f(x, y)).collect();
        Fields {
            l: m(&self.l, &o.l),
            z: m(&self.z, &o.z),
            y: m(&self.y, &o.y),
            om: m(&self.om, &o.om),
        }
    }

    fn map(&self, f: impl Fn(&Jet) -> Jet) -> Fields {
        let m = |a: &[Jet]| a.iter().map(&f).collect();
        Fields {
            l: m(&self.l),
            z: m(&self.z),
            y: m(&self.y),
            om: m(&self.om),
        }
    }
}

type Deriv<'a> = &'a dyn Fn(&Jet, usize) -> Result<Jet>;

/// Right sides G of L^μ∂_μF = G for F = L, Z, Y = ∇_L Z and ω.
fn sources(b: &CurvatureBundle, f: &Fields, d: Deriv) -> Result<Fields> {
    let jd = f.l[0].dim();
    let k = f.l[0].order();
    let gam = |e: usize, a: usize, c: usize| &b.gamma[(e * N + a) * N + c];
    // gl[e][a] = Γ^e_{ac} L^c
    let mut gl = vec![Jet::zero(jd, k); N * N];
    for e in 0..N {
        for a in 0..N {
            let acc = &mut gl[e * N + a];
            for c in 0..N {
                acc.mul_acc(gam(e, a, c), &f.l[c]);
            }
        }
    }
    let mut ll = vec![Jet::zero(jd, k); N * N];
    for a in 0..N {
        for c in 0..N {
            ll[a * N + c] = f.l[a].mul_jet(&f.l[c]);
        }
    }
    let mut src_l = Vec::with_capacity(N);
    let mut src_z = Vec::with_capacity(N);
    let mut src_y = Vec::with_capacity(N);
    for mu in 0..N {
        let mut al = Jet::zero(jd, k);
        let mut az = f.y[mu].truncate(k);
        let mut ay = Jet::zero(jd, k);
        for a in 0..N {
            al.axpy(-1.0, &gl[mu * N + a].mul_jet(&f.l[a]));
            az.axpy(-1.0, &gl[mu * N + a].mul_jet(&f.z[a]));
            ay.axpy(-1.0, &gl[mu * N + a].mul_jet(&f.y[a]));
        }
        for bb in 0..N {
            for c in 0..N {
                let mut rz = Jet::zero(jd, k);
                for dd in 0..N {
                    rz.mul_acc(&b.riemann_up[((mu * N + bb) * N + c) * N + dd], &f.z[dd]);
                }
                ay.mul_acc(&rz, &ll[bb * N + c]);
            }
        }
        src_l.push(al);
        src_z.push(az);
        src_y.push(ay);
    }

    let ko = f.om[0].order();
    let zl: Vec<Jet> = (0..N)
        .map(|r| {
            let mut acc = Jet::zero(jd, k);
            for v in 0..N {
                acc.mul_acc(&b.g[r * N + v], &f.z[v]);
            }
            acc
        })
        .collect();
    let mut dzl = vec![Jet::zero(jd, ko); N * N];
    let mut dl = vec![Jet::zero(jd, ko); N * N];
    for a in 0..N {
        for r in 0..N {
            let mut acc = d(&zl[r], a)?.truncate(ko);
            for e in 0..N {
                acc.axpy(-1.0, &gam(e, a, r).mul_jet(&zl[e]));
            }
            dzl[a * N + r] = acc;
            dl[a * N + r] = (d(&f.l[r], a)? + &gl[r * N + a]).truncate(ko);
        }
    }
    let pi: Vec<Jet> = (0..N * N)
        .map(|k2| &dzl[k2] + &dzl[(k2 % N) * N + k2 / N])
        .collect();
    let mut src_om = Vec::with_capacity(N * N);
    for a in 0..N {
        for bb in 0..N {
            let mut acc = Jet::zero(jd, ko);
            for r in 0..N {
                acc.mul_acc(&pi[a * N + r], &dl[bb * N + r]);
                acc.axpy(-1.0, &pi[bb * N + r].mul_jet(&dl[a * N + r]));
            }
            for e in 0..N {
                acc.mul_acc(&gl[e * N + a], &f.om[e * N + bb]);
                acc.mul_acc(&gl[e * N + bb], &f.om[a * N + e]);
            }
            src_om.push(acc);
        }
    }
    Ok(Fields {
        l: src_l,
        z: src_z,
        y: src_y,
        om: src_om,
    })
}

#[derive(Clone, Debug)]
struct State {
    x: Vec<f64>,
    f: Fields,
    /// ∂x/∂(τ, σ) of the congruence map, row-major.
    jac: Vec<f64>,
}

impl State {
    fn step(&self, rate: &State, h: f64) -> State {
        State {
            x: self.x.iter().zip(&rate.x).map(|(a, b)| a + h * b).collect(),
            f: self.f.zip(&rate.f, |a, b| {
                let mut o = a.clone();
                o.axpy(h, b);
                o
            }),
            jac: self.jac.iter().zip(&rate.jac).map(|(a, b)| a + h * b).collect(),
        }
    }
}

fn advected(f: &[Jet], coef: &[Jet], d: Deriv, vars: std::ops::Range<usize>) -> Result<Vec<Jet>> {
    f.iter()
        .map(|fj| {
            let k = fj.order();
            let mut acc = Jet::zero(fj.dim(), k);
            for v in vars.clone() {
                acc.mul_acc(&coef[v], &d(fj, v)?.pad(k));
            }
            Ok(acc)
        })
        .collect()
}

fn transport_rate(metric: &MetricDescriptor, st: &State, s: f64) -> Result<State> {
    // Blow-up of the transported ∂L is the jet-level signature of focusing.
    if !st.x.iter().chain(&st.jac).all(|v| v.is_finite()) || !st.f.l.iter().all(|j| j.is_finite()) {
        return Err(GeoError::Caustic { det: f64::NAN, s });
    }
    let b = curvature_at(metric, &st.x, METRIC_ORDER)?;
    let d = |j: &Jet, a: usize| -> Result<Jet> { Ok(j.partial(a)?) };
    let src = sources(&b, &st.f, &d)?;
    let l0: Vec<f64> = st.f.l.iter().map(|j| j.value()).collect();
    let shift: Vec<Jet> = st.f.l.iter().map(|j| j.without_value()).collect();
    let adv = Fields {
        l: advected(&st.f.l, &shift, &d, 0..N)?,
        z: advected(&st.f.z, &shift, &d, 0..N)?,
        y: advected(&st.f.y, &shift, &d, 0..N)?,
        om: advected(&st.f.om, &shift, &d, 0..N)?,
    };
    let f = src.zip(&adv, |s, a| s - a);
    let mut jac = vec![0.0; N * N];
    for mu in 0..N {
        for i in 0..N {
            jac[mu * N + i] = (0..N).map(|nu| st.f.l[mu].d(nu) * st.jac[nu * N + i]).sum();
        }
    }
    Ok(State { x: l0, f, jac })
}

fn affine_jets(origin: &[f64], m: &[f64], order: usize) -> Vec<Jet> {
    (0..N)
        .map(|mu| {
            let mut j = Jet::constant(N, order, origin[mu]);
            for i in 0..N {
                j.axpy(m[mu * N + i], &Jet::variable(N, order, i, 0.0));
            }
            j
        })
        .collect()
}

fn restrict_tau0(j: &Jet) -> Jet {
    let mut out = j.clone();
    for (s, c) in out.coeffs_mut().iter_mut().enumerate() {
        if exponent(N, s)[0] > 0 {
            *c = 0.0;
        }
    }
    out
}

/// Seed state at one patch point: jets of L, Z, ∇_L Z and ω in the spacetime
/// coordinates, obtained by solving the transport system off the patch in
/// the linear chart q = (τ, σ) with x = x0 + τ L(x0) + σ_i d_i.
fn seed_state(metric: &MetricDescriptor, seed: &Seed, c: &Congruence, sigma: &[f64]) -> Result<State> {
    let k = TRANSPORT_ORDER;
    let x0 = c.patch.point(sigma);
    metric.domain.check(&x0)?;
    let lv: Vec<f64> = c.l.iter().map(|e| e.eval(&x0)).collect();
    let cols = [&lv, &c.patch.directions[0], &c.patch.directions[1], &c.patch.directions[2]];
    let mut m = vec![0.0; N * N];
    for (i, col) in cols.iter().enumerate() {
        for mu in 0..N {
            m[mu * N + i] = col[mu];
        }
    }
    let mm = nalgebra::DMatrix::from_row_slice(N, N, &m);
    let det = mm.determinant();
    if det.abs() < CAUSTIC_DET {
        return Err(GeoError::Precondition(format!(
            "congruence is tangent to the seed patch (det = {det:e})"
        )));
    }
    let minv_m = mm.try_inverse().ok_or(GeoError::SingularMatrix { det })?;
    let minv: Vec<f64> = (0..N * N).map(|q| minv_m[(q / N, q % N)]).collect();

    let qlin = affine_jets(&x0, &m, k + 1);
    let bx = curvature_at(metric, &x0, METRIC_ORDER)?;
    let bq = bx.compose(&qlin);
    let to_q = |j: &Jet| restrict_tau0(&j.compose(&qlin));
    let lx = metric.field_jets(&c.l, &x0, k)?;
    let zx = metric.field_jets(&seed.z, &x0, k + 1)?;
    let l_sig: Vec<Jet> = lx.iter().map(to_q).collect();
    let z_sig: Vec<Jet> = zx.iter().map(to_q).collect();
    let dq = |j: &Jet, a: usize| -> Result<Jet> {
        let mut acc = Jet::zero(j.dim(), j.order().saturating_sub(1));
        for i in 0..N {
            acc.axpy(minv[i * N + a], &j.partial(i)?);
        }
        Ok(acc)
    };

    let y_sig: Vec<Jet> = match seed.mode {
        SeedMode::Field => (0..N)
            .map(|mu| {
                let mut acc = Jet::zero(N, k);
                for a in 0..N {
                    acc.mul_acc(&lx[a], &zx[mu].partial(a)?);
                    for bb in 0..N {
                        acc.mul_acc(&bx.gamma[(mu * N + a) * N + bb], &lx[a].mul_jet(&zx[bb]));
                    }
                }
                Ok(to_q(&acc))
            })
            .collect::<Result<_>>()?,
        SeedMode::DeformationCompatible => {
            let zl: Vec<Jet> = (0..N)
                .map(|r| {
                    let mut acc = Jet::zero(N, k + 1);
                    for v in 0..N {
                        acc.mul_acc(&bq.g[r * N + v], &z_sig[v]);
                    }
                    restrict_tau0(&acc)
                })
                .collect();
            let mut a_mat = Vec::with_capacity(N * N);
            a_mat.extend(l_sig.iter().cloned());
            let mut rhs = vec![Jet::zero(N, k)];
            for i in 1..N {
                let d = &c.patch.directions[i - 1];
                for mu in 0..N {
                    a_mat.push(Jet::constant(N, k, d[mu]));
                }
                let mut acc = Jet::zero(N, k);
                for beta in 0..N {
                    let mut t = restrict_tau0(&zl[beta].partial(i)?);
                    for e in 0..N {
                        for alpha in 0..N {
                            let gj = &bq.gamma[(e * N + alpha) * N + beta];
                            t.axpy(-d[alpha], &restrict_tau0(&gj.mul_jet(&zl[e])));
                        }
                    }
                    acc.axpy(-1.0, &l_sig[beta].mul_jet(&t));
                }
                rhs.push(restrict_tau0(&acc));
            }
            let ainv = invert_matrix(&a_mat, N)?;
            let ylow: Vec<Jet> = (0..N)
                .map(|r| {
                    let mut acc = Jet::zero(N, k);
                    for q in 0..N {
                        acc.mul_acc(&ainv[r * N + q], &rhs[q]);
                    }
                    acc
                })
                .collect();
            (0..N)
                .map(|mu| {
                    let mut acc = Jet::zero(N, k);
                    for v in 0..N {
                        acc.mul_acc(&bq.g_inv[mu * N + v], &ylow[v]);
                    }
                    restrict_tau0(&acc)
                })
                .collect()
        }
    };

    let sig = Fields {
        l: l_sig.iter().map(|j| j.truncate(k)).collect(),
        z: z_sig.iter().map(|j| j.truncate(k)).collect(),
        y: y_sig.iter().map(|j| j.truncate(k)).collect(),
        om: vec![Jet::zero(N, k - 1); N * N],
    };
    let mut f = sig.clone();
    for _ in 0..=k {
        let src = sources(&bq, &f, &dq)?;
        let lq: Vec<Jet> = (0..N)
            .map(|i| {
                let mut acc = Jet::zero(N, k);
                for mu in 0..N {
                    acc.axpy(minv[i * N + mu], &f.l[mu]);
                }
                acc
            })
            .collect();
        let inv0 = lq[0].recip()?;
        let qd = |j: &Jet, a: usize| -> Result<Jet> { Ok(j.partial(a)?) };
        let adv = Fields {
            l: advected(&f.l, &lq, &qd, 1..N)?,
            z: advected(&f.z, &lq, &qd, 1..N)?,
            y: advected(&f.y, &lq, &qd, 1..N)?,
            om: advected(&f.om, &lq, &qd, 1..N)?,
        };
        let rate = src.zip(&adv, |s, a| (s - a).mul_jet(&inv0));
        f = sig.zip(&rate, |s, r| s + &r.pad(s.order()).integrate(0));
    }
    let xq = affine_jets(&[0.0; N], &minv, k);
    let fx = f.map(|j| j.compose(&xq));
    Ok(State { x: x0, f: fx, jac: m })
}

fn odot(b: &CurvatureBundle, bt: &JetTensor, r: &JetTensor) -> JetTensor {
    let jd = bt.jet_dim();
    let k = bt.order().min(r.order());
    let mut bm = vec![Jet::zero(jd, k); N * N];
    for a in 0..N {
        for l in 0..N {
            for mu in 0..N {
                bm[a * N + l].mul_acc(&bt.data[a * N + mu], &b.g_inv[mu * N + l]);
            }
        }
    }
    let mut out = JetTensor::zeros(N, vec![Slot::Down; 4], jd, k);
    for q in 0..N * N * N * N {
        let idx = unflatten(N, 4, q);
        let acc = &mut out.data[q];
        for slot in 0..4 {
            let mut j = idx.clone();
            for l in 0..N {
                j[slot] = l;
                acc.mul_acc(&bm[idx[slot] * N + l], r.at(&j));
            }
        }
    }
    out
}

/// π, ω, B, Ḃ, P, L_Z R and W at the bundle point from spacetime jets of Z
/// (order ≥ 2), L (order ≥ 1) and ω (order ≥ 1). The bundle needs metric
/// jets of order 4.
pub fn structure_tensors(
    b: &CurvatureBundle,
    z: &[Jet],
    l: &[Jet],
    omega: &[Jet],
) -> Result<StructureTensors> {
    if b.order < METRIC_ORDER {
        return Err(crate::jet::JetError::InsufficientOrder {
            have: b.order,
            need: METRIC_ORDER,
        }
        .into());
    }
    let zt = JetTensor::new(N, vec![Slot::Up], z.iter().map(|j| j.truncate(2)).collect());
    let zl = b.lower_slot(&zt, 0);
    let dz = cov_derivative(b, &zl)?;
    let pi = dz.add(&dz.permute(&[1, 0]));
    let om = JetTensor::new(
        N,
        vec![Slot::Down, Slot::Down],
        omega.iter().map(|j| j.truncate(1)).collect(),
    );
    let bt = pi.add(&om).scale(0.5);
    let dpi = cov_derivative(b, &pi)?.values();
    let dom = cov_derivative(b, &om)?.values();
    let db = cov_derivative(b, &bt)?.values();
    let lt = JetTensor::new(N, vec![Slot::Up], l.iter().map(|j| j.truncate(1)).collect());
    let lv = lt.values().data;
    let dl = cov_derivative(b, &lt)?.values();

    let mut bdot = TensorValue::zeros(N, vec![Slot::Down; 2]);
    for a in 0..N {
        for c in 0..N {
            bdot.set(&[a, c], (0..N).map(|r| lv[r] * db.get(&[r, a, c])).sum());
        }
    }
    let mut p = TensorValue::zeros(N, vec![Slot::Down; 3]);
    for a in 0..N {
        for bb in 0..N {
            for m in 0..N {
                let v = dpi.get(&[a, bb, m]) - dpi.get(&[bb, a, m]) - dom.get(&[m, a, bb]);
                p.set(&[a, bb, m], v);
            }
        }
    }
    let rj = b.riemann_jets().truncate(2);
    let lie_r = lie_derivative(&zt, &rj)?;
    let w = lie_r.sub(&odot(b, &bt, &rj.truncate(1)));
    let dw = cov_derivative(b, &w)?.values();
    let drm = cov_derivative(b, &rj)?.values();
    let gi = b.g_inv_val();
    let riemann = b.riemann_tensor();
    let rup: Vec<f64> = b.riemann_up.iter().map(|j| j.value()).collect();

    let mut div_w = TensorValue::zeros(N, vec![Slot::Down; 3]);
    for q in 0..N * N * N {
        let i = unflatten(N, 3, q);
        let mut s = 0.0;
        for a in 0..N {
            for e in 0..N {
                let ge = gi[a * N + e];
                if ge != 0.0 {
                    s += ge * dw.get(&[e, a, i[0], i[1], i[2]]);
                }
            }
        }
        div_w.data[q] = s;
    }

    let bv = bt.values();
    let raise2 = |t: &TensorValue| {
        let mut o = TensorValue::zeros(N, vec![Slot::Up; 2]);
        for m in 0..N {
            for v in 0..N {
                let mut s = 0.0;
                for a in 0..N {
                    for c in 0..N {
                        s += gi[m * N + a] * gi[v * N + c] * t.get(&[a, c]);
                    }
                }
                o.set(&[m, v], s);
            }
        }
        o
    };
    let bup = raise2(&bv);
    // R with the first and a second slot raised, used by the P terms.
    let mut r_uu_34 = vec![0.0; N.pow(4)]; // R^{μν}_{γδ}
    let mut r_u_u_24 = vec![0.0; N.pow(4)]; // R^μ_β^ν_δ  stored [μ][β][ν][δ]
    let mut r_u_u_4 = vec![0.0; N.pow(4)]; // R^μ_{βγ}^ν stored [μ][β][γ][ν]
    for q in 0..N.pow(4) {
        let i = unflatten(N, 4, q);
        let (mu, x1, x2, x3) = (i[0], i[1], i[2], i[3]);
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        for c in 0..N {
            for a in 0..N {
                let g_mu = gi[mu * N + a];
                if g_mu == 0.0 {
                    continue;
                }
                s1 += g_mu * gi[x1 * N + c] * riemann.get(&[a, c, x2, x3]);
                s2 += g_mu * gi[x2 * N + c] * riemann.get(&[a, x1, c, x3]);
                s3 += g_mu * gi[x3 * N + c] * riemann.get(&[a, x1, x2, c]);
            }
        }
        r_uu_34[q] = s1;
        r_u_u_24[q] = s2;
        r_u_u_4[q] = s3;
    }
    let mut trace_p = vec![0.0; N];
    for (r, tp) in trace_p.iter_mut().enumerate() {
        for m in 0..N {
            for v in 0..N {
                *tp += gi[m * N + v] * p.get(&[m, r, v]);
            }
        }
    }
    let mut div_rhs = TensorValue::zeros(N, vec![Slot::Down; 3]);
    for q in 0..N * N * N {
        let i = unflatten(N, 3, q);
        let (be, ga, de) = (i[0], i[1], i[2]);
        let mut s = 0.0;
        let mut sb = 0.0;
        for m in 0..N {
            for v in 0..N {
                sb += bup.get(&[m, v]) * drm.get(&[v, m, be, ga, de]);
                let f = |x: usize| p.get(&[x, v, m]);
                s += f(be) * r_uu_34[((m * N + v) * N + ga) * N + de];
                s += f(ga) * r_u_u_24[((m * N + be) * N + v) * N + de];
                s += f(de) * r_u_u_4[((m * N + be) * N + ga) * N + v];
            }
            s += trace_p[m] * rup[((m * N + be) * N + ga) * N + de];
        }
        div_rhs.data[q] = sb + 0.5 * s;
    }

    Ok(StructureTensors {
        dz: dz.values(),
        pi: pi.values(),
        omega: om.values(),
        b: bv,
        bdot,
        p,
        lie_r: lie_r.values(),
        w: w.values(),
        curvature_scale: riemann.max_abs(),
        riemann,
        dl,
        gamma: b.christoffel(),
        g_inv: b.metric_inverse(),
        div_w,
        div_rhs,
    })
}

impl StructureTensors {
    /// max |∇^αW_{αβγδ} − rhs|.
    pub fn divergence_residual(&self) -> f64 {
        self.div_w.sub(&self.div_rhs).max_abs()
    }

    /// Contractions that vanish for Killing-compatible seeds:
    /// (L^απ_{αβ}, L^βω_{αβ}, L^μP_{αβμ}, L^αL^β∇_αZ_β).
    pub fn l_contractions(&self, l: &[f64]) -> [f64; 4] {
        let mut lpi: f64 = 0.0;
        let mut lom: f64 = 0.0;
        let mut lp: f64 = 0.0;
        let mut step1 = 0.0;
        for a in 0..N {
            let s1: f64 = (0..N).map(|b| l[b] * self.pi.get(&[a, b])).sum();
            let s2: f64 = (0..N).map(|b| l[b] * self.omega.get(&[a, b])).sum();
            lpi = lpi.max(s1.abs());
            lom = lom.max(s2.abs());
            for b in 0..N {
                let s3: f64 = (0..N).map(|m| l[m] * self.p.get(&[a, b, m])).sum();
                lp = lp.max(s3.abs());
                step1 += l[a] * l[b] * self.dz.get(&[a, b]);
            }
        }
        [lpi, lom, lp, f64::abs(step1)]
    }
}

/// Max-abs violations of the Weyl-field identities.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct WeylBattery {
    pub antisym_first: f64,
    pub antisym_last: f64,
    pub pair_exchange: f64,
    pub cyclic: f64,
    pub trace: f64,
    pub scale: f64,
}

impl WeylBattery {
    pub fn worst(&self) -> f64 {
        [self.antisym_first, self.antisym_last, self.pair_exchange, self.cyclic, self.trace]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn weyl_battery(w: &TensorValue, g_inv: &TensorValue) -> WeylBattery {
    let n = w.dim;
    let mut out = WeylBattery {
        scale: w.max_abs(),
        ..Default::default()
    };
    for q in 0..w.data.len() {
        let i = unflatten(n, 4, q);
        let (a, b, c, d) = (i[0], i[1], i[2], i[3]);
        let v = w.data[q];
        out.antisym_first = out.antisym_first.max((v + w.get(&[b, a, c, d])).abs());
        out.antisym_last = out.antisym_last.max((v + w.get(&[a, b, d, c])).abs());
        out.pair_exchange = out.pair_exchange.max((v - w.get(&[c, d, a, b])).abs());
        let cyc = v + w.get(&[a, c, d, b]) + w.get(&[a, d, b, c]);
        out.cyclic = out.cyclic.max(cyc.abs());
    }
    for b in 0..n {
        for d in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                for c in 0..n {
                    s += g_inv.get(&[a, c]) * w.get(&[a, b, c, d]);
                }
            }
            out.trace = out.trace.max(f64::abs(s));
        }
    }
    out
}

fn sample_of(metric: &MetricDescriptor, st: &State, s: f64) -> Result<ExtensionSample> {
    let b = curvature_at(metric, &st.x, METRIC_ORDER)?;
    let tensors = structure_tensors(&b, &st.f.z, &st.f.l, &st.f.om)?;
    let jm = nalgebra::DMatrix::from_row_slice(N, N, &st.jac);
    Ok(ExtensionSample {
        s,
        x: st.x.clone(),
        l: st.f.l.iter().map(|j| j.value()).collect(),
        z: st.f.z.iter().map(|j| j.value()).collect(),
        jacobian_det: jm.determinant(),
        tensors,
    })
}

fn extend_one(
    metric: &MetricDescriptor,
    seed: &Seed,
    c: &Congruence,
    sigma: [f64; 3],
    cfg: &ExtensionConfig,
) -> Result<ExtendedGeodesic> {
    if !(cfg.step > 0.0) || !(cfg.span > 0.0) || cfg.sample_every == 0 {
        return Err(GeoError::Input("step, span and sampling must be positive".into()));
    }
    let mut st = seed_state(metric, seed, c, &sigma)?;
    let steps = (cfg.span / cfg.step).round() as usize;
    let h = cfg.span / steps as f64;
    let mut samples = vec![sample_of(metric, &st, 0.0)?];
    let det0 = samples[0].jacobian_det;
    for n in 1..=steps {
        let s0 = (n - 1) as f64 * h;
        let k1 = transport_rate(metric, &st, s0)?;
        let k2 = transport_rate(metric, &st.step(&k1, h / 2.0), s0 + h / 2.0)?;
        let k3 = transport_rate(metric, &st.step(&k2, h / 2.0), s0 + h / 2.0)?;
        let k4 = transport_rate(metric, &st.step(&k3, h), s0 + h)?;
        let mut next = st.step(&k1, h / 6.0);
        next = next.step(&k2, h / 3.0);
        next = next.step(&k3, h / 3.0);
        next = next.step(&k4, h / 6.0);
        let s = n as f64 * h;
        let det = nalgebra::DMatrix::from_row_slice(N, N, &next.jac).determinant();
        if !(det.abs() >= CAUSTIC_DET) || det.signum() != det0.signum() {
            return Err(GeoError::Caustic { det, s });
        }
        if metric.domain.violation(&next.x).is_some() {
            return Err(GeoError::DomainExit { s });
        }
        st = next;
        if n % cfg.sample_every == 0 {
            samples.push(sample_of(metric, &st, s)?);
        }
    }
    Ok(ExtendedGeodesic {
        sigma,
        spacing: h * cfg.sample_every as f64,
        samples,
    })
}

/// Extends `seed.z` along every geodesic of the congruence. Geodesics are
/// integrated independently and in parallel.
pub fn extend_vector(
    metric: &MetricDescriptor,
    seed: &Seed,
    congruence: &Congruence,
    cfg: &ExtensionConfig,
) -> Result<Vec<ExtendedGeodesic>> {
    if metric.dim() != N || seed.z.len() != N || congruence.l.len() != N {
        return Err(GeoError::Input("extension needs a 4-dimensional metric and fields".into()));
    }
    congruence
        .sigmas
        .par_iter()
        .map(|s| extend_one(metric, seed, congruence, *s, cfg))
        .collect()
}

/// Max-abs residuals of ∇_L B = Ḃ and of the transport equations for Ḃ and P
/// along one geodesic, with ∇_L from a five-point stencil over samples.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct TransportResiduals {
    pub b: f64,
    pub bdot: f64,
    pub p: f64,
}

fn stencil(vals: [&TensorValue; 4], h: f64) -> Vec<f64> {
    let [m2, m1, p1, p2] = vals;
    (0..m2.data.len())
        .map(|q| (m2.data[q] - 8.0 * m1.data[q] + 8.0 * p1.data[q] - p2.data[q]) / (12.0 * h))
        .collect()
}

/// ∇_L T for covariant T given d/ds of its components.
fn along(t: &TensorValue, dds: &[f64], gamma: &TensorValue, l: &[f64]) -> TensorValue {
    let n = t.dim;
    let r = t.rank();
    let mut gl = vec![0.0; n * n]; // Γ^e_{ca}L^c stored [e][a]
    for e in 0..n {
        for a in 0..n {
            gl[e * n + a] = (0..n).map(|c| gamma.get(&[e, c, a]) * l[c]).sum();
        }
    }
    let mut out = t.clone();
    for q in 0..t.data.len() {
        let idx = unflatten(n, r, q);
        let mut v = dds[q];
        let mut j = idx.clone();
        for s in 0..r {
            for e in 0..n {
                j[s] = e;
                v -= gl[e * n + idx[s]] * t.get(&j);
            }
            j[s] = idx[s];
        }
        out.data[q] = v;
    }
    out
}

pub fn transport_residuals(geo: &ExtendedGeodesic) -> Result<TransportResiduals> {
    let ns = geo.samples.len();
    if ns < 5 {
        return Err(GeoError::TooFewSamples { have: ns, need: 5 });
    }
    let h = geo.spacing;
    let mut out = TransportResiduals::default();
    for i in 2..ns - 2 {
        let s = &geo.samples;
        let t = &s[i].tensors;
        let l = &s[i].l;
        let pick = |f: fn(&StructureTensors) -> &TensorValue| {
            [f(&s[i - 2].tensors), f(&s[i - 1].tensors), f(&s[i + 1].tensors), f(&s[i + 2].tensors)]
        };
        let nb = along(&t.b, &stencil(pick(|t| &t.b), h), &t.gamma, l);
        let nbd = along(&t.bdot, &stencil(pick(|t| &t.bdot), h), &t.gamma, l);
        let np = along(&t.p, &stencil(pick(|t| &t.p), h), &t.gamma, l);
        out.b = out.b.max(nb.sub(&t.bdot).max_abs());

        let gi = &t.g_inv;
        let mix = |x: &TensorValue| {
            let mut o = TensorValue::zeros(N, vec![Slot::Down, Slot::Up]);
            for a in 0..N {
                for r in 0..N {
                    o.set(&[a, r], (0..N).map(|v| x.get(&[a, v]) * gi.get(&[v, r])).sum());
                }
            }
            o
        };
        let pim = mix(&t.pi);
        let bm = mix(&t.b);
        for al in 0..N {
            for be in 0..N {
                let mut rhs = 0.0;
                for m in 0..N {
                    for v in 0..N {
                        let llm = l[m] * l[v];
                        rhs += llm * t.lie_r.get(&[m, al, be, v]);
                        for r in 0..N {
                            rhs -= pim.get(&[be, r]) * llm * t.riemann.get(&[m, al, r, v]);
                        }
                    }
                    rhs -= 2.0 * t.bdot.get(&[m, be]) * t.dl.get(&[al, m]);
                }
                out.bdot = out.bdot.max((nbd.get(&[al, be]) - rhs).abs());
                for mu in 0..N {
                    let mut rhs = 0.0;
                    for v in 0..N {
                        rhs += 2.0 * l[v] * t.w.get(&[al, be, mu, v]);
                        for r in 0..N {
                            rhs += 2.0 * l[v] * bm.get(&[mu, r]) * t.riemann.get(&[al, be, r, v]);
                        }
                        rhs -= t.dl.get(&[mu, v]) * t.p.get(&[al, be, v]);
                    }
                    out.p = out.p.max((np.get(&[al, be, mu]) - rhs).abs());
                }
            }
        }
    }
    Ok(out)
}

/// Null frame (e1, e2, e3, e4) with e4 = L, g(e3, e4) = −1, e1, e2 orthonormal
/// and orthogonal to both; e3 is built from the transversal `v`, and e1, e2 by
/// projecting `axes` in order and Gram–Schmidt.
pub fn null_frame(g: &TensorValue, l: &[f64], v: &[f64], axes: &[Vec<f64>]) -> Result<[Vec<f64>; 4]> {
    let n = g.dim;
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g.get(&[i, j]) * a[i] * b[j];
            }
        }
        s
    };
    let vl = ip(v, l);
    if vl.abs() < 1e-12 {
        return Err(GeoError::Input("frame reference vector is orthogonal to L".into()));
    }
    let beta = -ip(v, v) / (2.0 * vl);
    let alpha = -1.0 / vl;
    let e3: Vec<f64> = (0..n).map(|i| alpha * (v[i] + beta * l[i])).collect();
    let mut spatial: Vec<Vec<f64>> = Vec::new();
    for ax in axes {
        let (a3, a4) = (ip(ax, &e3), ip(ax, l));
        let mut x: Vec<f64> = (0..n).map(|i| ax[i] + a3 * l[i] + a4 * e3[i]).collect();
        for e in &spatial {
            let c = ip(&x, e);
            for i in 0..n {
                x[i] -= c * e[i];
            }
        }
        let nrm = ip(&x, &x);
        if nrm > 1e-12 {
            let s = nrm.sqrt();
            spatial.push(x.iter().map(|v| v / s).collect());
        }
        if spatial.len() == 2 {
            break;
        }
    }
    if spatial.len() < 2 {
        return Err(GeoError::Input("reference axes do not span the screen".into()));
    }
    Ok([spatial[0].clone(), spatial[1].clone(), e3, l.to_vec()])
}

/// Components T(e_{i1}, …, e_{ik}) of a covariant tensor.
pub fn frame_components(t: &TensorValue, frame: &[Vec<f64>; 4]) -> TensorValue {
    let m: Vec<f64> = frame.iter().flat_map(|e| e.iter().copied()).collect();
    let mut out = t.clone();
    for s in 0..t.rank() {
        out = out.transform_slot(s, &m, Slot::Down);
    }
    out
}

/// Number of e4 minus number of e3 among frame indices (frame slot 2 is e3, 3 is e4).
pub fn signature(idx: &[usize]) -> i32 {
    idx.iter().map(|&i| match i {
        3 => 1,
        2 => -1,
        _ => 0,
    }).sum()
}

/// Largest |component| with signature ≥ s.
pub fn graded_norm(frame_t: &TensorValue, s: i32) -> f64 {
    let r = frame_t.rank();
    (0..frame_t.data.len())
        .filter(|&q| signature(&unflatten(frame_t.dim, r, q)) >= s)
        .fold(0.0, |m, q| m.max(frame_t.data[q].abs()))
}

fn exact_norm(frame_t: &TensorValue, s: i32) -> f64 {
    let r = frame_t.rank();
    (0..frame_t.data.len())
        .filter(|&q| signature(&unflatten(frame_t.dim, r, q)) == s)
        .fold(0.0, |m, q| m.max(frame_t.data[q].abs()))
}

#[derive(Clone, Debug)]
pub struct CascadeSpec {
    /// Transversal vector field used to build e3.
    pub v: Vec<Expr>,
    /// Reference axes for e1, e2 in order of preference.
    pub axes: Vec<Vec<Expr>>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LieCurvatureCheck {
    Satisfied { max: f64 },
    Violated { component: [usize; 4], value: f64, s: f64, x: Vec<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeBlock {
    pub name: String,
    /// Signature thresholds for B, Ḃ, P, W.
    pub thresholds: [i32; 4],
    pub norms: [f64; 4],
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradedRow {
    pub s: i32,
    pub b: f64,
    pub bdot: f64,
    pub p: f64,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeReport {
    pub lie_curvature: LieCurvatureCheck,
    pub blocks: Vec<CascadeBlock>,
    pub graded: Vec<GradedRow>,
    pub first_failing_block: Option<String>,
    /// Highest signature carrying a component above tolerance, over B, Ḃ, P, W.
    pub first_failing_signature: Option<i32>,
    pub frame_error: f64,
    pub passed: bool,
}

const BLOCKS: [(&str, [i32; 4]); 5] = [
    ("stage1", [0, 0, 1, 2]),
    ("stage2", [-1, -1, 0, 1]),
    ("stage3", [-2, -2, -1, 0]),
    ("stage4", [-2, -2, -2, -1]),
    ("stage5", [-2, -2, -3, -2]),
];

/// Signature-graded vanishing check of B, Ḃ, P, W along the extension,
/// preceded by the check that (L_Z R)(L, X, L, Y) vanishes for X, Y in
/// span(e1, e2, e4).
pub fn signature_cascade(
    metric: &MetricDescriptor,
    geodesics: &[ExtendedGeodesic],
    plan: &CascadeSpec,
) -> Result<CascadeReport> {
    let mut graded = [[0.0f64; 4]; 7]; // s = 3 ..= -3
    let mut exact = [[0.0f64; 4]; 7];
    let mut lie_curvature = LieCurvatureCheck::Satisfied { max: 0.0 };
    let mut frame_error: f64 = 0.0;
    for geo in geodesics {
        for smp in &geo.samples {
            let g = TensorValue {
                dim: N,
                variance: vec![Slot::Down; 2],
                data: metric.metric_at(&smp.x)?,
            };
            let v: Vec<f64> = plan.v.iter().map(|e| e.eval(&smp.x)).collect();
            let axes: Vec<Vec<f64>> = plan
                .axes
                .iter()
                .map(|a| a.iter().map(|e| e.eval(&smp.x)).collect())
                .collect();
            let frame = null_frame(&g, &smp.l, &v, &axes)?;
            let fg = frame_components(&g, &frame);
            for i in 0..N {
                for j in 0..N {
                    let want = match (i, j) {
                        (0, 0) | (1, 1) => 1.0,
                        (2, 3) | (3, 2) => -1.0,
                        _ => 0.0,
                    };
                    frame_error = frame_error.max((fg.get(&[i, j]) - want).abs());
                }
            }
            let t = &smp.tensors;
            let fl = frame_components(&t.lie_r, &frame);
            for &a in &[0usize, 1, 3] {
                for &b in &[0usize, 1, 3] {
                    let val = fl.get(&[3, a, 3, b]);
                    let worse = match &lie_curvature {
                        LieCurvatureCheck::Satisfied { max } => val.abs() > *max,
                        LieCurvatureCheck::Violated { value, .. } => val.abs() > value.abs(),
                    };
                    if worse {
                        lie_curvature = if val.abs() > plan.tol {
                            LieCurvatureCheck::Violated {
                                component: [4, a + 1, 4, b + 1],
                                value: val,
                                s: smp.s,
                                x: smp.x.clone(),
                            }
                        } else {
                            LieCurvatureCheck::Satisfied { max: val.abs() }
                        };
                    }
                }
            }
            let comps = [
                frame_components(&t.b, &frame),
                frame_components(&t.bdot, &frame),
                frame_components(&t.p, &frame),
                frame_components(&t.w, &frame),
            ];
            for (row, s) in (-3..=3).rev().enumerate() {
                for (k, c) in comps.iter().enumerate() {
                    graded[row][k] = graded[row][k].max(graded_norm(c, s));
                    exact[row][k] = exact[row][k].max(exact_norm(c, s));
                }
            }
        }
    }
    let norm_at = |k: usize, s: i32| graded[(3 - s) as usize][k];
    let blocks: Vec<CascadeBlock> = BLOCKS
        .iter()
        .map(|(name, th)| {
            let norms = [norm_at(0, th[0]), norm_at(1, th[1]), norm_at(2, th[2]), norm_at(3, th[3])];
            CascadeBlock {
                name: name.to_string(),
                thresholds: *th,
                norms,
                passed: norms.iter().all(|v| *v <= plan.tol),
            }
        })
        .collect();
    let first_failing_block = blocks.iter().find(|b| !b.passed).map(|b| b.name.clone());
    let first_failing_signature = (-3..=3)
        .rev()
        .find(|&s| exact[(3 - s) as usize].iter().any(|v| *v > plan.tol));
    let rows = (-3..=2)
        .rev()
        .map(|s| GradedRow {
            s,
            b: norm_at(0, s),
            bdot: norm_at(1, s),
            p: norm_at(2, s),
            w: norm_at(3, s),
        })
        .collect();
    let passed = matches!(lie_curvature, LieCurvatureCheck::Satisfied { .. }) && first_failing_block.is_none();
    Ok(CascadeReport {
        lie_curvature,
        blocks,
        graded: rows,
        first_failing_block,
        first_failing_signature,
        frame_error,
        passed,
    })
}

/// Standard setups used by tests, the CLI and the acceptance suite.
pub mod setups {
    use super::*;
    use crate::catalog::{kerr_ingoing, minkowski, MinkowskiChart};

    fn unit(i: usize) -> Vec<f64> {
        (0..N).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
    }

    fn consts(v: &[f64]) -> Vec<Expr> {
        v.iter().map(|&c| Expr::c(c)).collect()
    }

    /// Kerr in ingoing coordinates; L = −∂_r leaves the patch r = r0 spanned by
    /// (∂_θ, ∂_φ, ∂_u) at (θ0, r0, 0, 0).
    pub fn kerr_congruence(
        m: f64,
        a: f64,
        theta0: f64,
        r0: f64,
        sigmas: Vec<[f64; 3]>,
    ) -> Result<(MetricDescriptor, Congruence)> {
        let metric = kerr_ingoing(m, a)?;
        let l = metric.vector("L").expect("L").to_vec();
        let c = Congruence {
            patch: Patch {
                base: vec![theta0, r0, 0.0, 0.0],
                directions: [unit(0), unit(2), unit(3)],
            },
            l,
            sigmas,
        };
        Ok((metric, c))
    }

    /// Kerr frame reference: e3 from ∂_u, screen from ∂_θ then ∂_φ.
    pub fn kerr_cascade_spec(tol: f64) -> CascadeSpec {
        CascadeSpec {
            v: consts(&unit(3)),
            axes: vec![consts(&unit(0)), consts(&unit(2))],
            tol,
        }
    }

    /// Minkowski (Cartesian) with the timelike congruence ∂_t from the plane t = 0.
    pub fn minkowski_timelike(sigmas: Vec<[f64; 3]>) -> (MetricDescriptor, Congruence) {
        let metric = minkowski(MinkowskiChart::Cartesian);
        let c = Congruence {
            patch: Patch {
                base: vec![0.0; N],
                directions: [unit(1), unit(2), unit(3)],
            },
            l: consts(&unit(0)),
            sigmas,
        };
        (metric, c)
    }

    /// Minkowski (Cartesian) with L = (∂_t + ∂_x)/√2 leaving the plane t + x = 0.
    /// Patch points with σ_1 = 0 generate the null hyperplane t = x.
    pub fn minkowski_null(sigmas: Vec<[f64; 3]>) -> (MetricDescriptor, Congruence) {
        let metric = minkowski(MinkowskiChart::Cartesian);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = Congruence {
            patch: Patch {
                base: vec![0.0; N],
                directions: [vec![h, -h, 0.0, 0.0], unit(2), unit(3)],
            },
            l: consts(&[h, h, 0.0, 0.0]),
            sigmas,
        };
        (metric, c)
    }

    /// Frame reference for [`minkowski_null`].
    pub fn minkowski_cascade_spec(tol: f64) -> CascadeSpec {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        CascadeSpec {
            v: consts(&[h, -h, 0.0, 0.0]),
            axes: vec![consts(&unit(2)), consts(&unit(3))],
            tol,
        }
    }

    /// Kerr T plus a smooth non-Killing perturbation.
    pub fn perturbed_t(eps: f64) -> Vec<Expr> {
        let (th, r, ph) = (Expr::var(0), Expr::var(1), Expr::var(2));
        vec![
            (&r * 0.3).sin() * eps,
            th.cos() * &ph * eps,
            (&th * &r) * (0.5 * eps),
            Expr::c(1.0) + (&r * &r) * (0.2 * eps),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::setups::*;
    use super::*;
    use crate::catalog::{kerr_ingoing, minkowski, MinkowskiChart};
    use crate::tensor::curvature_at;

    fn grid3() -> Vec<[f64; 3]> {
        vec![[0.0, 0.0, 0.0], [0.05, 0.1, 0.0], [-0.04, 0.0, 0.2]]
    }

    #[test]
    fn rotation_extends_exactly_in_flat_space() {
        let (m, c) = minkowski_timelike(vec![[0.3, -0.2, 0.1], [1.0, 0.5, 0.0]]);
        let z = m.vector("rotation_xy").unwrap().to_vec();
        let seed = Seed { z: z.clone(), mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.05, span: 0.5, sample_every: 1 };
        let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
        for g in &geos {
            assert!(g.sup(|s| s.tensors.pi.max_abs()) <= 1e-12);
            for s in &g.samples {
                for (zi, e) in s.z.iter().zip(&z) {
                    assert!((zi - e.eval(&s.x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kerr_killing_fields_stay_killing() {
        for name in ["T", "Z"] {
            let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, grid3()).unwrap();
            let z = m.vector(name).unwrap().to_vec();
            let seed = Seed { z: z.clone(), mode: SeedMode::Field };
            let cfg = ExtensionConfig { step: 0.01, span: 0.1, sample_every: 1 };
            let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
            for g in &geos {
                assert!(g.sup(|s| s.tensors.pi.max_abs()) <= 1e-9, "{name}");
                assert!(g.sup(|s| s.tensors.w.max_abs()) <= 1e-8, "{name}");
                for s in &g.samples {
                    for (zi, e) in s.z.iter().zip(&z) {
                        assert!((zi - e.eval(&s.x)).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn compatible_seed_agrees_with_field_seed_for_killing_data() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.02, 0.0, 0.1]]).unwrap();
        let z = m.vector("T").unwrap().to_vec();
        let cfg = ExtensionConfig { step: 0.02, span: 0.04, sample_every: 1 };
        let a = extend_vector(&m, &Seed { z: z.clone(), mode: SeedMode::Field }, &c, &cfg).unwrap();
        let b = extend_vector(&m, &Seed { z, mode: SeedMode::DeformationCompatible }, &c, &cfg).unwrap();
        let (sa, sb) = (a[0].samples.last().unwrap(), b[0].samples.last().unwrap());
        for i in 0..4 {
            assert!((sa.z[i] - sb.z[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn identities_hold_for_perturbed_seed() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.0, 0.0, 0.0]]).unwrap();
        let seed = Seed { z: perturbed_t(0.1), mode: SeedMode::DeformationCompatible };
        let cfg = ExtensionConfig { step: 0.005, span: 0.06, sample_every: 1 };
        let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
        let g = &geos[0];
        assert!(g.sup(|s| s.tensors.pi.max_abs()) > 1e-3);
        let lc = g.sup(|s| {
            let v = s.tensors.l_contractions(&s.l);
            v.iter().fold(0.0, |m: f64, x| m.max(*x))
        });
        assert!(lc < 1e-8, "L contractions {lc}");
        let res = transport_residuals(g).unwrap();
        assert!(res.b < 1e-7 && res.bdot < 1e-7 && res.p < 1e-7, "{res:?}");
        assert!(g.sup(|s| s.tensors.divergence_residual()) < 1e-9);
        for s in &g.samples {
            let wb = weyl_battery(&s.tensors.w, &s.tensors.g_inv);
            assert!(wb.worst() <= 1e-8 * wb.scale.max(1.0), "{wb:?}");
        }
    }

    #[test]
    fn divergence_identity_for_arbitrary_fields() {
        let m = kerr_ingoing(1.0, 0.5).unwrap();
        let x = [1.0, 1.3, 0.3, 0.1];
        let b = curvature_at(&m, &x, 4).unwrap();
        let (th, r, ph, u) = (Expr::var(0), Expr::var(1), Expr::var(2), Expr::var(3));
        let z = [&r * &th, ph.cos(), &u * &r + 1.0, th.sin() * 2.0];
        let l = [Expr::c(0.1), Expr::c(-1.0), &th * 0.2, Expr::c(0.0)];
        let mut om = vec![Expr::c(0.0); 16];
        for a in 0..4 {
            for c in (a + 1)..4 {
                let e = Expr::var(a) * (0.3 * (c as f64)) + Expr::var(c).sin() * 0.1;
                om[a * 4 + c] = e.clone();
                om[c * 4 + a] = -e;
            }
        }
        let zj = m.field_jets(&z, &x, 2).unwrap();
        let lj = m.field_jets(&l, &x, 1).unwrap();
        let oj = m.field_jets(&om, &x, 1).unwrap();
        let t = structure_tensors(&b, &zj, &lj, &oj).unwrap();
        let scale = t.div_w.max_abs().max(1.0);
        assert!(t.divergence_residual() <= 1e-10 * scale, "{}", t.divergence_residual());
        let wb = weyl_battery(&t.w, &t.g_inv);
        assert!(wb.worst() <= 1e-10 * wb.scale, "{wb:?}");
    }

    #[test]
    fn null_frame_normalization() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let g = TensorValue {
            dim: 4,
            variance: vec![Slot::Down; 2],
            data: m.metric_at(&[0.0; 4]).unwrap(),
        };
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let f = null_frame(&g, &[h, h, 0.0, 0.0], &[1.0, 0.0, 0.3, 0.0], &[unit_axis(2), unit_axis(3)])
            .unwrap();
        let fg = frame_components(&g, &f);
        assert!((fg.get(&[2, 3]) + 1.0).abs() < 1e-14);
        assert!(fg.get(&[2, 2]).abs() < 1e-14);
        assert!((fg.get(&[0, 0]) - 1.0).abs() < 1e-14);
        assert!(fg.get(&[0, 1]).abs() < 1e-14);
    }

    fn unit_axis(i: usize) -> Vec<f64> {
        (0..4).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_seed_gives_zero_residuals() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.0; 3]]).unwrap();
        let seed = Seed { z: vec![Expr::c(0.0); 4], mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.01, span: 0.05, sample_every: 1 };
        let g = &extend_vector(&m, &seed, &c, &cfg).unwrap()[0];
        let r = transport_residuals(g).unwrap();
        assert_eq!((r.b, r.bdot, r.p), (0.0, 0.0, 0.0));
        assert_eq!(g.sup(|s| s.tensors.divergence_residual()), 0.0);
    }

    #[test]
    fn flat_quadratic_seed_transport() {
        let (m, c) = minkowski_null(vec![[0.1, 0.2, -0.1]]);
        let (x, y) = (Expr::var(1), Expr::var(2));
        let z = vec![&x * &y, &y * &y * 0.5, &x * &x, Expr::c(0.2) * &x];
        let seed = Seed { z, mode: SeedMode::DeformationCompatible };
        let cfg = ExtensionConfig { step: 0.05, span: 0.5, sample_every: 1 };
        let g = &extend_vector(&m, &seed, &c, &cfg).unwrap()[0];
        let r = transport_residuals(g).unwrap();
        assert!(r.b < 1e-8 && r.bdot < 1e-8 && r.p < 1e-8, "{r:?}");
        assert!(g.sup(|s| s.tensors.div_w.max_abs().max(s.tensors.div_rhs.max_abs())) < 1e-9);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let (m, c) = minkowski_timelike(vec![[0.0; 3]]);
        let seed = Seed { z: m.vector("rotation_xy").unwrap().to_vec(), mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.1, span: 0.2, sample_every: 1 };
        let g = &extend_vector(&m, &seed, &c, &cfg).unwrap()[0];
        assert!(matches!(transport_residuals(g), Err(GeoError::TooFewSamples { have: 3, need: 5 })));
    }

    #[test]
    fn caustic_is_reported() {
        // Straight lines x = (1 + σ)(1 − s) all meet x = 0 at s = 1.
        let (m, mut c) = minkowski_timelike(vec![[1.0, 0.0, 0.0]]);
        c.l = vec![Expr::c(1.0), -Expr::var(1), Expr::c(0.0), Expr::c(0.0)];
        let seed = Seed { z: vec![Expr::c(0.0); 4], mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.01, span: 1.5, sample_every: 10 };
        let r = extend_vector(&m, &seed, &c, &cfg);
        assert!(matches!(r, Err(GeoError::Caustic { s, .. }) if (0.95..=1.05).contains(&s)), "{r:?}");
    }

    #[test]
    fn deterministic_reruns() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, grid3()).unwrap();
        let seed = Seed { z: perturbed_t(0.1), mode: SeedMode::DeformationCompatible };
        let cfg = ExtensionConfig { step: 0.02, span: 0.06, sample_every: 1 };
        let a = serde_json::to_string(&extend_vector(&m, &seed, &c, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&extend_vector(&m, &seed, &c, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cascade_passes_for_killing_data() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.0, 0.0, 0.0], [0.0, 0.3, 0.0]]).unwrap();
        let seed = Seed { z: m.vector("Z").unwrap().to_vec(), mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.01, span: 0.05, sample_every: 1 };
        let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
        let rep = signature_cascade(&m, &geos, &kerr_cascade_spec(1e-6)).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.frame_error < 1e-9);
        assert_eq!(rep.first_failing_signature, None);

        let (m, c) = minkowski_null(vec![[0.0, 0.0, 0.0], [0.0, 1.0, -0.5]]);
        let seed = Seed { z: m.vector("rotation_yz").unwrap().to_vec(), mode: SeedMode::Field };
        let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
        let rep = signature_cascade(&m, &geos, &minkowski_cascade_spec(1e-6)).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn cascade_flags_signature_two_for_violating_seed() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.0, 0.0, 0.0]]).unwrap();
        let seed = Seed { z: perturbed_t(0.1), mode: SeedMode::Field };
        let cfg = ExtensionConfig { step: 0.01, span: 0.05, sample_every: 1 };
        let geos = extend_vector(&m, &seed, &c, &cfg).unwrap();
        let rep = signature_cascade(&m, &geos, &kerr_cascade_spec(1e-6)).unwrap();
        assert!(matches!(rep.lie_curvature, LieCurvatureCheck::Violated { .. }), "{rep:?}");
        assert_eq!(rep.first_failing_signature, Some(2));
        assert_eq!(rep.first_failing_block.as_deref(), Some("stage1"));
        assert!(!rep.passed);
    }

    #[test]
    fn convergence_is_fourth_order() {
        let (m, c) = kerr_congruence(1.0, 0.5, 1.1, 1.4, vec![[0.0; 3]]).unwrap();
        let seed = Seed { z: m.vector("T").unwrap().to_vec(), mode: SeedMode::Field };
        let err = |h: f64| {
            let cfg = ExtensionConfig { step: h, span: 0.4, sample_every: 1 };
            let g = &extend_vector(&m, &seed, &c, &cfg).unwrap()[0];
            g.samples.last().unwrap().tensors.pi.max_abs()
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        for r in [e1 / e2, e2 / e3] {
            assert!((12.0..=20.0).contains(&r), "{e1:e} {e2:e} {e3:e}");
        }
    }

    #[test]
    fn signature_counts() {
        assert_eq!(signature(&[3, 0, 3, 1]), 2);
        assert_eq!(signature(&[2, 2, 3]), -1);
    }
}
