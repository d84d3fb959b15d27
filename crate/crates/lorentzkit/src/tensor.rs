//! Pointwise curvature from metric jets, covariant and Lie derivatives of
//! jet-valued tensors, volume forms and the 3-dimensional Hodge dual.
//!
//! Curvature convention: R^ρ_{σμν} = ∂_μΓ^ρ_{νσ} − ∂_νΓ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ} − Γ^ρ_{νλ}Γ^λ_{μσ},
//! R_{αβγδ} = g_{αρ}R^ρ_{βγδ}, Ric_{βδ} = R^ρ_{βρδ}. With this choice
//! ∇_a∇_bZ_c = R_{cbad}Z^d + Γ_{abc} for every vector field Z.

use crate::catalog::MetricDescriptor;
use crate::error::{GeoError, Result};
use crate::jet::{invert_matrix, Jet, JetError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Slot {
    Up,
    Down,
}

pub fn flat_index(dim: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

pub fn unflatten(dim: usize, rank: usize, mut k: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in idx.iter_mut().rev() {
        *slot = k % dim;
        k /= dim;
    }
    idx
}

/// Real tensor at a point.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TensorValue {
    pub dim: usize,
    pub variance: Vec<Slot>,
    pub data: Vec<f64>,
}

impl TensorValue {
    pub fn zeros(dim: usize, variance: Vec<Slot>) -> Self {
        let n = dim.pow(variance.len() as u32);
        TensorValue {
            dim,
            variance,
            data: vec![0.0; n],
        }
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_index(self.dim, idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = flat_index(self.dim, idx);
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn sub(&self, other: &TensorValue) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Contracts slot `slot` with the matrix `m` (row-major, `m[new][old]` summed over old).
    pub fn transform_slot(&self, slot: usize, m: &[f64], new_variance: Slot) -> TensorValue {
        let n = self.dim;
        let r = self.rank();
        let mut out = TensorValue::zeros(n, self.variance.clone());
        out.variance[slot] = new_variance;
        for k in 0..self.data.len() {
            let idx = unflatten(n, r, k);
            let mut acc = 0.0;
            let mut j = idx.clone();
            for e in 0..n {
                j[slot] = e;
                acc += m[idx[slot] * n + e] * self.data[flat_index(n, &j)];
            }
            out.data[k] = acc;
        }
        out
    }
}

/// Tensor whose entries are jets at a common point.
#[derive(Clone, Debug)]
pub struct JetTensor {
    pub dim: usize,
    pub variance: Vec<Slot>,
    pub data: Vec<Jet>,
}

impl JetTensor {
    pub fn new(dim: usize, variance: Vec<Slot>, data: Vec<Jet>) -> Self {
        assert_eq!(data.len(), dim.pow(variance.len() as u32));
        JetTensor {
            dim,
            variance,
            data,
        }
    }

    pub fn zeros(dim: usize, variance: Vec<Slot>, jet_dim: usize, order: usize) -> Self {
        let n = dim.pow(variance.len() as u32);
        JetTensor {
            dim,
            variance,
            data: vec![Jet::zero(jet_dim, order); n],
        }
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(|j| j.order()).min().unwrap_or(0)
    }

    pub fn jet_dim(&self) -> usize {
        self.data[0].dim()
    }

    pub fn at(&self, idx: &[usize]) -> &Jet {
        &self.data[flat_index(self.dim, idx)]
    }

    pub fn values(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn truncate(&self, order: usize) -> JetTensor {
        JetTensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|j| j.truncate(order)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> JetTensor {
        JetTensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().map(|j| j.scale(s)).collect(),
        }
    }

    pub fn add(&self, other: &JetTensor) -> JetTensor {
        JetTensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &JetTensor) -> JetTensor {
        JetTensor {
            dim: self.dim,
            variance: self.variance.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Reorders index slots: slot i of the result is slot perm[i] of self.
    pub fn permute(&self, perm: &[usize]) -> JetTensor {
        let n = self.dim;
        let r = self.rank();
        let mut data = self.data.clone();
        for (k, slot) in data.iter_mut().enumerate() {
            let idx = unflatten(n, r, k);
            let mut src = vec![0; r];
            for (i, &p) in perm.iter().enumerate() {
                src[p] = idx[i];
            }
            *slot = self.data[flat_index(n, &src)].clone();
        }
        JetTensor {
            dim: n,
            variance: perm.iter().map(|&p| self.variance[p]).collect(),
            data,
        }
    }

    /// Contracts slot `slot` with a row-major jet matrix `m[new][old]`.
    pub fn transform_slot(&self, slot: usize, m: &[Jet], new_variance: Slot) -> JetTensor {
        let n = self.dim;
        let r = self.rank();
        let order = self.order().min(m.iter().map(|j| j.order()).min().unwrap_or(0));
        let mut out = JetTensor::zeros(n, self.variance.clone(), self.jet_dim(), order);
        out.variance[slot] = new_variance;
        for k in 0..self.data.len() {
            let idx = unflatten(n, r, k);
            let mut j = idx.clone();
            let acc = &mut out.data[k];
            for e in 0..n {
                j[slot] = e;
                acc.mul_acc(&m[idx[slot] * n + e], &self.data[flat_index(n, &j)]);
            }
        }
        out
    }
}

/// Metric, inverse, connection and curvature at a point, all as jets in the coordinates.
#[derive(Clone, Debug)]
pub struct CurvatureBundle {
    pub point: Vec<f64>,
    pub dim: usize,
    /// Order of the metric jets.
    pub order: usize,
    pub g: Vec<Jet>,
    pub g_inv: Vec<Jet>,
    /// Γ_{cab} = ½(∂_a g_bc + ∂_b g_ac − ∂_c g_ab), stored [c][a][b].
    pub gamma_low: Vec<Jet>,
    /// Γ^d_{ab}, stored [d][a][b].
    pub gamma: Vec<Jet>,
    /// R^a_{bcd}; empty when the metric order is below 2.
    pub riemann_up: Vec<Jet>,
    pub riemann: Vec<Jet>,
    pub ricci: Vec<Jet>,
    pub det: f64,
}

/// Curvature bundle of a catalog metric at x with metric jets of order K ≥ 2.
pub fn curvature_at(metric: &MetricDescriptor, x: &[f64], order: usize) -> Result<CurvatureBundle> {
    if order < 2 {
        return Err(JetError::InsufficientOrder { have: order, need: 2 }.into());
    }
    let g = metric.metric_jets(x, order)?;
    CurvatureBundle::from_metric_jets(x, g)
}

/// Connection only (K ≥ 1), used by integrators.
pub fn connection_at(metric: &MetricDescriptor, x: &[f64], order: usize) -> Result<CurvatureBundle> {
    let g = metric.metric_jets(x, order.max(1))?;
    CurvatureBundle::from_metric_jets(x, g)
}

impl CurvatureBundle {
    pub fn from_metric_jets(x: &[f64], g: Vec<Jet>) -> Result<CurvatureBundle> {
        let n = (g.len() as f64).sqrt().round() as usize;
        assert_eq!(n * n, g.len());
        let order = g.iter().map(|j| j.order()).min().unwrap_or(0);
        if order < 1 {
            return Err(JetError::InsufficientOrder { have: order, need: 1 }.into());
        }
        let jd = g[0].dim();
        let vals = nalgebra::DMatrix::from_fn(n, n, |i, j| g[i * n + j].value());
        let det = vals.lu().determinant();
        let g_inv = invert_matrix(&g, n)?;

        let dg: Vec<Vec<Jet>> = (0..n)
            .map(|c| g.iter().map(|j| j.partial(c)).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<_, _>>()?;
        let k1 = order - 1;
        let mut gamma_low = vec![Jet::zero(jd, k1); n * n * n];
        for c in 0..n {
            for a in 0..n {
                for b in a..n {
                    let v = (&dg[a][b * n + c] + &dg[b][a * n + c] - &dg[c][a * n + b]).scale(0.5);
                    gamma_low[(c * n + a) * n + b] = v.clone();
                    gamma_low[(c * n + b) * n + a] = v;
                }
            }
        }
        let mut gamma = vec![Jet::zero(jd, k1); n * n * n];
        for d in 0..n {
            for a in 0..n {
                for b in a..n {
                    let mut acc = Jet::zero(jd, k1);
                    for c in 0..n {
                        acc.mul_acc(&g_inv[d * n + c], &gamma_low[(c * n + a) * n + b]);
                    }
                    gamma[(d * n + b) * n + a] = acc.clone();
                    gamma[(d * n + a) * n + b] = acc;
                }
            }
        }
        let mut bundle = CurvatureBundle {
            point: x.to_vec(),
            dim: n,
            order,
            g,
            g_inv,
            gamma_low,
            gamma,
            riemann_up: vec![],
            riemann: vec![],
            ricci: vec![],
            det,
        };
        if order >= 2 {
            bundle.fill_curvature()?;
        }
        Ok(bundle)
    }

    fn fill_curvature(&mut self) -> Result<()> {
        let n = self.dim;
        let jd = self.g[0].dim();
        let k2 = self.order - 2;
        let gi = |d: usize, a: usize, b: usize| (d * n + a) * n + b;
        // dgam[mu][rho][nu][sigma] = ∂_mu Γ^rho_{nu sigma}
        let dgam: Vec<Vec<Jet>> = (0..n)
            .map(|mu| self.gamma.iter().map(|j| j.partial(mu)).collect::<std::result::Result<_, _>>())
            .collect::<std::result::Result<_, _>>()?;
        let gam2: Vec<Jet> = self.gamma.iter().map(|j| j.truncate(k2)).collect();
        let mut rup = vec![Jet::zero(jd, k2); n * n * n * n];
        for rho in 0..n {
            for sigma in 0..n {
                for mu in 0..n {
                    for nu in (mu + 1)..n {
                        let mut acc = &dgam[mu][gi(rho, nu, sigma)] - &dgam[nu][gi(rho, mu, sigma)];
                        for lam in 0..n {
                            acc.mul_acc(&gam2[gi(rho, mu, lam)], &gam2[gi(lam, nu, sigma)]);
                            acc.axpy(
                                -1.0,
                                &gam2[gi(rho, nu, lam)].mul_jet(&gam2[gi(lam, mu, sigma)]),
                            );
                        }
                        let base = (rho * n + sigma) * n;
                        rup[(base + nu) * n + mu] = -&acc;
                        rup[(base + mu) * n + nu] = acc;
                    }
                }
            }
        }
        let g2: Vec<Jet> = self.g.iter().map(|j| j.truncate(k2)).collect();
        let mut rlow = vec![Jet::zero(jd, k2); n * n * n * n];
        for a in 0..n {
            for rest in 0..n * n * n {
                let mut acc = Jet::zero(jd, k2);
                for rho in 0..n {
                    acc.mul_acc(&g2[a * n + rho], &rup[rho * n * n * n + rest]);
                }
                rlow[a * n * n * n + rest] = acc;
            }
        }
        let mut ric = vec![Jet::zero(jd, k2); n * n];
        for b in 0..n {
            for d in 0..n {
                let mut acc = Jet::zero(jd, k2);
                for rho in 0..n {
                    acc += &rup[((rho * n + b) * n + rho) * n + d];
                }
                ric[b * n + d] = acc;
            }
        }
        self.riemann_up = rup;
        self.riemann = rlow;
        self.ricci = ric;
        Ok(())
    }

    pub fn jet_dim(&self) -> usize {
        self.g[0].dim()
    }

    pub fn g_val(&self) -> Vec<f64> {
        self.g.iter().map(|j| j.value()).collect()
    }

    pub fn g_inv_val(&self) -> Vec<f64> {
        self.g_inv.iter().map(|j| j.value()).collect()
    }

    pub fn metric(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: vec![Slot::Down, Slot::Down],
            data: self.g_val(),
        }
    }

    pub fn metric_inverse(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: vec![Slot::Up, Slot::Up],
            data: self.g_inv_val(),
        }
    }

    pub fn christoffel(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: vec![Slot::Up, Slot::Down, Slot::Down],
            data: self.gamma.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn riemann_tensor(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: vec![Slot::Down; 4],
            data: self.riemann.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn ricci_tensor(&self) -> TensorValue {
        TensorValue {
            dim: self.dim,
            variance: vec![Slot::Down; 2],
            data: self.ricci.iter().map(|j| j.value()).collect(),
        }
    }

    pub fn metric_tensor_jets(&self) -> JetTensor {
        JetTensor::new(self.dim, vec![Slot::Down, Slot::Down], self.g.clone())
    }

    pub fn inverse_tensor_jets(&self) -> JetTensor {
        JetTensor::new(self.dim, vec![Slot::Up, Slot::Up], self.g_inv.clone())
    }

    pub fn riemann_jets(&self) -> JetTensor {
        JetTensor::new(self.dim, vec![Slot::Down; 4], self.riemann.clone())
    }

    /// Largest |R_{αβγδ}|.
    pub fn curvature_scale(&self) -> f64 {
        self.riemann.iter().fold(0.0, |m, j| m.max(j.value().abs()))
    }

    /// Levi-Civita tensor with ∈_{01..} = sign·|det g|^{1/2}.
    pub fn volume_form(&self, sign: f64) -> TensorValue {
        let n = self.dim;
        let mut t = TensorValue::zeros(n, vec![Slot::Down; n]);
        let s = sign * self.det.abs().sqrt();
        for k in 0..t.data.len() {
            let idx = unflatten(n, n, k);
            if let Some(p) = permutation_sign(&idx) {
                t.data[k] = s * p;
            }
        }
        t
    }

    /// Lowers an index of a vector given by values.
    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|a| (0..n).map(|b| self.g[a * n + b].value() * v[b]).sum())
            .collect()
    }

    pub fn raise(&self, w: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|a| (0..n).map(|b| self.g_inv[a * n + b].value() * w[b]).sum())
            .collect()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.g[a * n + b].value() * u[a] * v[b];
            }
        }
        s
    }

    /// Raises slot `slot` of a jet tensor.
    pub fn raise_slot(&self, t: &JetTensor, slot: usize) -> JetTensor {
        t.transform_slot(slot, &self.g_inv, Slot::Up)
    }

    pub fn lower_slot(&self, t: &JetTensor, slot: usize) -> JetTensor {
        t.transform_slot(slot, &self.g, Slot::Down)
    }

    /// Substitutes coordinate increments (jets in other variables) into every field of the bundle.
    pub fn compose(&self, delta: &[Jet]) -> CurvatureBundle {
        let pw = crate::jet::monomials(delta, self.order);
        let c = |v: &Vec<Jet>| v.iter().map(|j| j.compose_with(&pw)).collect::<Vec<_>>();
        CurvatureBundle {
            point: self.point.clone(),
            dim: self.dim,
            order: self.order.min(pw[0].order()),
            g: c(&self.g),
            g_inv: c(&self.g_inv),
            gamma_low: c(&self.gamma_low),
            gamma: c(&self.gamma),
            riemann_up: c(&self.riemann_up),
            riemann: c(&self.riemann),
            ricci: c(&self.ricci),
            det: self.det,
        }
    }
}

pub fn permutation_sign(idx: &[usize]) -> Option<f64> {
    let n = idx.len();
    let mut seen = vec![false; n];
    for &i in idx {
        if i >= n || seen[i] {
            return None;
        }
        seen[i] = true;
    }
    let mut sign = 1.0;
    let mut p = idx.to_vec();
    for i in 0..n {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    Some(sign)
}

/// Levi-Civita covariant derivative; the new (derivative) index comes first.
pub fn cov_derivative(bundle: &CurvatureBundle, t: &JetTensor) -> Result<JetTensor> {
    let n = t.dim;
    let r = t.rank();
    let tord = t.order();
    if tord < 1 {
        return Err(JetError::InsufficientOrder { have: tord, need: 1 }.into());
    }
    let order = (tord - 1).min(bundle.order - 1);
    let jd = t.jet_dim();
    let gam: Vec<Jet> = bundle.gamma.iter().map(|j| j.truncate(order)).collect();
    let dt: Vec<Vec<Jet>> = (0..n)
        .map(|c| {
            t.data
                .iter()
                .map(|j| j.partial(c).map(|p| p.truncate(order)))
                .collect::<std::result::Result<_, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let tt: Vec<Jet> = t.data.iter().map(|j| j.truncate(order)).collect();
    let mut variance = vec![Slot::Down];
    variance.extend(&t.variance);
    let mut out = Vec::with_capacity(n * t.data.len());
    for c in 0..n {
        for k in 0..t.data.len() {
            let idx = unflatten(n, r, k);
            let mut acc = dt[c][k].clone();
            let mut j = idx.clone();
            for (s, slot) in t.variance.iter().enumerate() {
                for e in 0..n {
                    j[s] = e;
                    let src = &tt[flat_index(n, &j)];
                    match slot {
                        Slot::Up => acc.mul_acc(&gam[(idx[s] * n + c) * n + e], src),
                        Slot::Down => acc.axpy(-1.0, &gam[(e * n + c) * n + idx[s]].mul_jet(src)),
                    }
                }
                j[s] = idx[s];
            }
            out.push(acc);
        }
    }
    let _ = jd;
    Ok(JetTensor::new(n, variance, out))
}

/// Lie derivative of a tensor field along a vector field (coordinate formula).
pub fn lie_derivative(x: &JetTensor, t: &JetTensor) -> Result<JetTensor> {
    if x.variance != [Slot::Up] {
        return Err(GeoError::Input("Lie derivative needs a vector field".into()));
    }
    let n = t.dim;
    let r = t.rank();
    let (xo, to) = (x.order(), t.order());
    if xo < 1 || to < 1 {
        return Err(JetError::InsufficientOrder { have: xo.min(to), need: 1 }.into());
    }
    let order = (to - 1).min(xo - 1);
    let dx: Vec<Vec<Jet>> = (0..n)
        .map(|c| {
            x.data
                .iter()
                .map(|j| j.partial(c).map(|p| p.truncate(order)))
                .collect::<std::result::Result<_, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let dt: Vec<Vec<Jet>> = (0..n)
        .map(|c| {
            t.data
                .iter()
                .map(|j| j.partial(c).map(|p| p.truncate(order)))
                .collect::<std::result::Result<_, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;
    let xv: Vec<Jet> = x.data.iter().map(|j| j.truncate(order)).collect();
    let tt: Vec<Jet> = t.data.iter().map(|j| j.truncate(order)).collect();
    let mut out = Vec::with_capacity(t.data.len());
    for k in 0..t.data.len() {
        let idx = unflatten(n, r, k);
        let mut acc = Jet::zero(t.jet_dim(), order);
        for c in 0..n {
            acc.mul_acc(&xv[c], &dt[c][k]);
        }
        let mut j = idx.clone();
        for (s, slot) in t.variance.iter().enumerate() {
            for c in 0..n {
                j[s] = c;
                let src = &tt[flat_index(n, &j)];
                match slot {
                    Slot::Down => acc.mul_acc(src, &dx[idx[s]][c]),
                    Slot::Up => acc.axpy(-1.0, &src.mul_jet(&dx[c][idx[s]])),
                }
            }
            j[s] = idx[s];
        }
        out.push(acc);
    }
    Ok(JetTensor::new(n, t.variance.clone(), out))
}

/// Deformation tensor π = L_X g.
pub fn deformation(bundle: &CurvatureBundle, x: &JetTensor) -> Result<JetTensor> {
    lie_derivative(x, &bundle.metric_tensor_jets())
}

/// ^{(X)}Γ_{αβμ} = ½(∇_απ_βμ + ∇_βπ_αμ − ∇_μπ_αβ) from ∇π stored [α][β][μ].
pub fn deformation_connection(dpi: &JetTensor) -> JetTensor {
    let n = dpi.dim;
    let mut out = dpi.clone();
    for a in 0..n {
        for b in 0..n {
            for m in 0..n {
                let v = (dpi.at(&[a, b, m]) + dpi.at(&[b, a, m]) - dpi.at(&[m, a, b])).scale(0.5);
                out.data[flat_index(n, &[a, b, m])] = v;
            }
        }
    }
    out
}

/// Max-abs residual of ∇_β(L_X V) − L_X(∇_β V) − Σ_j ^{(X)}Γ_{α_jβρ}V^{..ρ..} for covariant V.
pub fn commutation_check(bundle: &CurvatureBundle, x: &JetTensor, v: &JetTensor) -> Result<f64> {
    if v.variance.iter().any(|s| *s != Slot::Down) {
        return Err(GeoError::Input("commutation check needs a covariant tensor".into()));
    }
    let n = v.dim;
    let k = v.rank();
    let lhs = cov_derivative(bundle, &lie_derivative(x, v)?)?;
    let rhs = lie_derivative(x, &cov_derivative(bundle, v)?)?;
    let pi = deformation(bundle, x)?;
    let gx = deformation_connection(&cov_derivative(bundle, &pi)?).values();
    let vv = v.values();
    let ginv = bundle.g_inv_val();
    let mut res: f64 = 0.0;
    for idx in 0..lhs.data.len() {
        let full = unflatten(n, k + 1, idx);
        let beta = full[0];
        let alphas = &full[1..];
        let mut term = 0.0;
        for j in 0..k {
            for rho in 0..n {
                for sig in 0..n {
                    let mut a2 = alphas.to_vec();
                    a2[j] = sig;
                    term += gx.get(&[alphas[j], beta, rho]) * ginv[rho * n + sig] * vv.get(&a2);
                }
            }
        }
        let r = lhs.data[idx].value() - rhs.data[idx].value() - term;
        res = res.max(r.abs());
    }
    Ok(res)
}

/// ⋆F_m = ½ ∈_m^{ab} F_ab for an antisymmetric 2-form in three dimensions, with ∈_{012} = −|det|^{1/2}.
pub fn hodge_dual_3(bundle: &CurvatureBundle, f: &TensorValue) -> Result<Vec<f64>> {
    if bundle.dim != 3 || f.rank() != 2 {
        return Err(GeoError::Input("Hodge dual needs a 2-form in three dimensions".into()));
    }
    for a in 0..3 {
        for b in 0..3 {
            if (f.get(&[a, b]) + f.get(&[b, a])).abs() > 1e-12 * (1.0 + f.max_abs()) {
                return Err(GeoError::Input("2-form is not antisymmetric".into()));
            }
        }
    }
    let eps = bundle.volume_form(-1.0);
    let gi = bundle.g_inv_val();
    let mut out = vec![0.0; 3];
    for (m, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        s += eps.get(&[m, c, d]) * gi[c * 3 + a] * gi[d * 3 + b] * f.get(&[a, b]);
                    }
                }
            }
        }
        *o = 0.5 * s;
    }
    Ok(out)
}

/// The 2-form (⋆v)_{ab} = ∈_{abc} v^c dual to a 1-form v.
pub fn hodge_dual_3_one_form(bundle: &CurvatureBundle, v: &[f64]) -> TensorValue {
    let eps = bundle.volume_form(-1.0);
    let vu = bundle.raise(v);
    let mut t = TensorValue::zeros(3, vec![Slot::Down, Slot::Down]);
    for a in 0..3 {
        for b in 0..3 {
            let s: f64 = (0..3).map(|c| eps.get(&[a, b, c]) * vu[c]).sum();
            t.set(&[a, b], s);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{kerr_ingoing, kerr_quotient, minkowski, MinkowskiChart};
    use crate::expr::Expr;

    #[test]
    fn flat_space_has_no_curvature() {
        let m = minkowski(MinkowskiChart::Cartesian);
        let b = curvature_at(&m, &[0.3, 1.0, -2.0, 0.5], 2).unwrap();
        assert_eq!(b.christoffel().max_abs(), 0.0);
        assert_eq!(b.riemann_tensor().max_abs(), 0.0);
    }

    #[test]
    fn quotient_christoffel_cot() {
        let q = kerr_quotient(1.0, 0.5).unwrap();
        let rp = q.params.r_plus();
        let b = curvature_at(&q.metric(), &[std::f64::consts::FRAC_PI_4, rp, 0.0], 2).unwrap();
        // Γ^3_{13} in 1-based indices is gamma[2][0][2] here.
        assert!((b.christoffel().get(&[2, 0, 2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_compatibility() {
        let m = kerr_ingoing(1.0, 0.5).unwrap();
        let b = curvature_at(&m, &[1.0, 1.5, 0.2, 0.0], 3).unwrap();
        let dg = cov_derivative(&b, &b.metric_tensor_jets()).unwrap();
        assert!(dg.values().max_abs() < 1e-12);
    }

    #[test]
    fn radial_scaling_deformation() {
        let m = minkowski(MinkowskiChart::Polar);
        let x = [0.0, 2.0, 1.0, 0.5];
        let b = curvature_at(&m, &x, 3).unwrap();
        let xr = [Expr::c(0.0), Expr::var(1), Expr::c(0.0), Expr::c(0.0)];
        let xj = JetTensor::new(4, vec![Slot::Up], m.field_jets(&xr, &x, 3).unwrap());
        let pi = deformation(&b, &xj).unwrap().values();
        assert!((pi.get(&[1, 1]) - 2.0).abs() < 1e-14);
        assert!((pi.get(&[2, 2]) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn kerr_is_vacuum() {
        let m = kerr_ingoing(1.0, 0.5).unwrap();
        let b = curvature_at(&m, &[1.1, 1.3, 0.4, 0.0], 2).unwrap();
        let scale = b.curvature_scale();
        assert!(scale > 1e-3);
        assert!(b.ricci_tensor().max_abs() <= 1e-9 * scale);
    }

    #[test]
    fn second_derivative_convention() {
        // ∇_a∇_bZ_c = R_{cbad}Z^d + Γ_{abc} for an arbitrary vector field.
        let m = kerr_ingoing(1.0, 0.5).unwrap();
        let x = [1.1, 1.3, 0.4, 0.2];
        let b = curvature_at(&m, &x, 4).unwrap();
        let (th, r) = (Expr::var(0), Expr::var(1));
        let z = [r.sin() * 0.3, th.cos() * &r, Expr::var(3) * 0.5 + 1.0, th.clone() * &r];
        let zj = JetTensor::new(4, vec![Slot::Up], m.field_jets(&z, &x, 4).unwrap());
        let zl = b.lower_slot(&zj, 0);
        let dz = cov_derivative(&b, &zl).unwrap();
        let ddz = cov_derivative(&b, &dz).unwrap().values();
        let pi = dz.add(&dz.permute(&[1, 0]));
        let gx = deformation_connection(&cov_derivative(&b, &pi).unwrap()).values();
        let riem = b.riemann_tensor();
        let zv = zj.values();
        let mut worst: f64 = 0.0;
        for a in 0..4 {
            for bb in 0..4 {
                for c in 0..4 {
                    let rz: f64 = (0..4).map(|d| riem.get(&[c, bb, a, d]) * zv.data[d]).sum();
                    let res = ddz.get(&[a, bb, c]) - rz - gx.get(&[a, bb, c]);
                    worst = worst.max(res.abs());
                }
            }
        }
        assert!(worst < 1e-9, "residual {worst}");
    }

    #[test]
    fn permutation_signs() {
        assert_eq!(permutation_sign(&[0, 1, 2]), Some(1.0));
        assert_eq!(permutation_sign(&[1, 0, 2]), Some(-1.0));
        assert_eq!(permutation_sign(&[1, 2, 0]), Some(1.0));
        assert_eq!(permutation_sign(&[1, 1, 0]), None);
    }
}
