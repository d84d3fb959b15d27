//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] of order `K` in `dim` variables stores the coefficients
//! `∂^α f(x) / α!` for every multi-index with `|α| ≤ K`. Slots are ordered by
//! total degree and then lexicographically, so the coefficients of a lower
//! order jet are a prefix of the coefficients of a higher order one. That makes
//! truncation a slice copy and lets every order share one table per dimension.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;

pub const MAX_DIM: usize = 4;
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JetError {
    #[error("division by a jet with zero value")]
    DivisionByZero,
    #[error("square root of non-positive value {0}")]
    NonPositiveSqrt(f64),
    #[error("logarithm of non-positive value {0}")]
    NonPositiveLog(f64),
    #[error("fractional power of non-positive value {0}")]
    NonPositivePow(f64),
    #[error("jet order {have} is below the required {need}")]
    InsufficientOrder { have: usize, need: usize },
}

struct DimTable {
    exps: Vec<[u8; MAX_DIM]>,
    degree: Vec<u8>,
    /// Number of slots with degree ≤ K, indexed by K.
    count: [usize; MAX_ORDER + 1],
    /// Slot index from the base-(MAX_ORDER+1) encoding of an exponent.
    lookup: Vec<u16>,
    /// (i, j, k) with exps[i] + exps[j] = exps[k], sorted by degree of k.
    pairs: Vec<(u16, u16, u16)>,
    pair_end: [usize; MAX_ORDER + 1],
    /// raise[v][s]: slot of exps[s] + e_v, or u16::MAX when the degree would exceed MAX_ORDER.
    raise: Vec<Vec<u16>>,
    /// α! per slot.
    fact: Vec<f64>,
}

fn encode(e: &[u8; MAX_DIM]) -> usize {
    e.iter().rev().fold(0usize, |acc, &x| acc * (MAX_ORDER + 1) + x as usize)
}

fn build_table(dim: usize) -> DimTable {
    let mut exps: Vec<[u8; MAX_DIM]> = Vec::new();
    let total = (MAX_ORDER + 1).pow(dim as u32);
    for code in 0..total {
        let mut e = [0u8; MAX_DIM];
        let mut c = code;
        for slot in e.iter_mut().take(dim) {
            *slot = (c % (MAX_ORDER + 1)) as u8;
            c /= MAX_ORDER + 1;
        }
        if e.iter().map(|&x| x as usize).sum::<usize>() <= MAX_ORDER {
            exps.push(e);
        }
    }
    exps.sort_by(|a, b| {
        let da: u8 = a.iter().sum();
        let db: u8 = b.iter().sum();
        da.cmp(&db).then_with(|| b.cmp(a))
    });
    let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
    let mut count = [0usize; MAX_ORDER + 1];
    for (k, c) in count.iter_mut().enumerate() {
        *c = degree.iter().filter(|&&d| d as usize <= k).count();
    }
    let mut lookup = vec![u16::MAX; (MAX_ORDER + 1).pow(MAX_DIM as u32)];
    for (s, e) in exps.iter().enumerate() {
        lookup[encode(e)] = s as u16;
    }
    let mut pairs = Vec::new();
    for i in 0..exps.len() {
        for j in 0..exps.len() {
            if degree[i] + degree[j] <= MAX_ORDER as u8 {
                let mut e = [0u8; MAX_DIM];
                for v in 0..MAX_DIM {
                    e[v] = exps[i][v] + exps[j][v];
                }
                pairs.push((i as u16, j as u16, lookup[encode(&e)]));
            }
        }
    }
    pairs.sort_by_key(|&(i, j, k)| (degree[k as usize], k, i, j));
    let mut pair_end = [0usize; MAX_ORDER + 1];
    for (k, end) in pair_end.iter_mut().enumerate() {
        *end = pairs
            .iter()
            .filter(|&&(_, _, s)| degree[s as usize] as usize <= k)
            .count();
    }
    let mut raise = Vec::with_capacity(dim);
    for v in 0..dim {
        let row = exps
            .iter()
            .map(|e| {
                let mut f = *e;
                f[v] += 1;
                if f.iter().map(|&x| x as usize).sum::<usize>() > MAX_ORDER {
                    u16::MAX
                } else {
                    lookup[encode(&f)]
                }
            })
            .collect();
        raise.push(row);
    }
    let fact = exps
        .iter()
        .map(|e| e.iter().map(|&x| factorial(x as usize)).product())
        .collect();
    DimTable {
        exps,
        degree,
        count,
        lookup,
        pairs,
        pair_end,
        raise,
        fact,
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn table(dim: usize) -> &'static DimTable {
    static TABLES: OnceLock<Vec<DimTable>> = OnceLock::new();
    assert!((1..=MAX_DIM).contains(&dim), "jet dimension {dim} out of range");
    &TABLES.get_or_init(|| (1..=MAX_DIM).map(build_table).collect())[dim - 1]
}

/// Number of coefficients of a jet of the given dimension and order.
pub fn num_coeffs(dim: usize, order: usize) -> usize {
    table(dim).count[order]
}

/// Exponent of a slot.
pub fn exponent(dim: usize, slot: usize) -> [u8; MAX_DIM] {
    table(dim).exps[slot]
}

/// Slot of an exponent, if its degree is at most `MAX_ORDER`.
pub fn slot_of(dim: usize, e: &[u8]) -> Option<usize> {
    let mut full = [0u8; MAX_DIM];
    for (v, &x) in e.iter().enumerate() {
        if v >= dim && x != 0 {
            return None;
        }
        if v < MAX_DIM {
            full[v] = x;
        }
    }
    if full.iter().map(|&x| x as usize).sum::<usize>() > MAX_ORDER {
        return None;
    }
    let s = table(dim).lookup[encode(&full)];
    (s != u16::MAX).then_some(s as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    dim: u8,
    order: u8,
    c: Vec<f64>,
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Jet {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        Jet {
            dim: dim as u8,
            order: order as u8,
            c: vec![0.0; num_coeffs(dim, order)],
        }
    }

    pub fn constant(dim: usize, order: usize, v: f64) -> Jet {
        let mut j = Jet::zero(dim, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_var` expanded at the value `v`.
    pub fn variable(dim: usize, order: usize, var: usize, v: f64) -> Jet {
        let mut j = Jet::constant(dim, order, v);
        if order >= 1 {
            j.c[1 + var] = 1.0;
        }
        j
    }

    pub fn from_coeffs(dim: usize, order: usize, c: Vec<f64>) -> Jet {
        assert_eq!(c.len(), num_coeffs(dim, order));
        Jet {
            dim: dim as u8,
            order: order as u8,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn set_value(&mut self, v: f64) {
        self.c[0] = v;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    /// Taylor coefficient of the monomial with exponent `e`, zero when beyond the order.
    pub fn coeff(&self, e: &[u8]) -> f64 {
        match slot_of(self.dim(), e) {
            Some(s) if s < self.c.len() => self.c[s],
            _ => 0.0,
        }
    }

    /// Partial derivative `∂^e f` at the expansion point.
    pub fn derivative(&self, e: &[u8]) -> f64 {
        match slot_of(self.dim(), e) {
            Some(s) if s < self.c.len() => self.c[s] * table(self.dim()).fact[s],
            _ => 0.0,
        }
    }

    /// First partial `∂_var f` at the expansion point.
    pub fn d(&self, var: usize) -> f64 {
        if self.order == 0 {
            0.0
        } else {
            self.c[1 + var]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        Jet {
            dim: self.dim,
            order: order as u8,
            c: self.c[..num_coeffs(self.dim(), order)].to_vec(),
        }
    }

    /// Zero-extends to a higher order (a no-op when `order` is not above the current one).
    pub fn pad(&self, order: usize) -> Jet {
        if order <= self.order() {
            return self.clone();
        }
        let mut c = self.c.clone();
        c.resize(num_coeffs(self.dim(), order), 0.0);
        Jet {
            dim: self.dim,
            order: order as u8,
            c,
        }
    }

    /// The jet minus its constant term.
    pub fn without_value(&self) -> Jet {
        let mut j = self.clone();
        j.c[0] = 0.0;
        j
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            dim: self.dim,
            order: self.order,
            c: self.c.iter().map(|x| x * s).collect(),
        }
    }

    /// `self += s * other`, truncating `self` to the common order.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        self.lower_to(other.order());
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
    }

    /// `self += a * b`, truncating `self` to the common order.
    pub fn mul_acc(&mut self, a: &Jet, b: &Jet) {
        debug_assert_eq!(a.dim, b.dim);
        let k = self.order().min(a.order()).min(b.order());
        self.lower_to(k);
        let t = table(self.dim());
        for &(i, j, s) in &t.pairs[..t.pair_end[k]] {
            self.c[s as usize] += a.c[i as usize] * b.c[j as usize];
        }
    }

    fn lower_to(&mut self, order: usize) {
        if order < self.order() {
            self.c.truncate(num_coeffs(self.dim(), order));
            self.order = order as u8;
        }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        assert_eq!(self.dim, other.dim, "jet dimension mismatch");
        let k = self.order().min(other.order());
        let mut out = Jet::zero(self.dim(), k);
        let t = table(self.dim());
        for &(i, j, s) in &t.pairs[..t.pair_end[k]] {
            out.c[s as usize] += self.c[i as usize] * other.c[j as usize];
        }
        out
    }

    /// Evaluates `Σ_k f[k] h^k` where `h` is this jet minus its value.
    pub fn compose_series(&self, f: &[f64]) -> Jet {
        let k = self.order();
        let h = self.without_value();
        let mut r = Jet::constant(self.dim(), k, f[k]);
        for fk in f[..k].iter().rev() {
            r = r.mul_jet(&h);
            r.c[0] += fk;
        }
        r
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let a0 = self.value();
        if a0 == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let f: Vec<f64> = (0..=self.order())
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s / a0.powi(k as i32 + 1)
            })
            .collect();
        Ok(self.compose_series(&f))
    }

    pub fn div_jet(&self, other: &Jet) -> Result<Jet, JetError> {
        Ok(self.mul_jet(&other.recip()?))
    }

    pub fn powf(&self, p: f64) -> Result<Jet, JetError> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(JetError::NonPositivePow(a0));
        }
        let mut f = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (p - (k as f64 - 1.0)) / k as f64;
            }
            f.push(binom * a0.powf(p - k as f64));
        }
        Ok(self.compose_series(&f))
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(JetError::NonPositiveSqrt(a0));
        }
        self.powf(0.5)
    }

    pub fn powi(&self, n: i32) -> Result<Jet, JetError> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut r = Jet::constant(self.dim(), self.order(), 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                r = r.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        Ok(r)
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let f: Vec<f64> = (0..=self.order()).map(|k| e0 / factorial(k)).collect();
        self.compose_series(&f)
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a0 = self.value();
        if a0 <= 0.0 {
            return Err(JetError::NonPositiveLog(a0));
        }
        let f: Vec<f64> = (0..=self.order())
            .map(|k| {
                if k == 0 {
                    a0.ln()
                } else {
                    let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                    s / (k as f64 * a0.powi(k as i32))
                }
            })
            .collect();
        Ok(self.compose_series(&f))
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        let f: Vec<f64> = (0..=self.order())
            .map(|k| cyc[k % 4] / factorial(k))
            .collect();
        self.compose_series(&f)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        let f: Vec<f64> = (0..=self.order())
            .map(|k| cyc[k % 4] / factorial(k))
            .collect();
        self.compose_series(&f)
    }

    /// Partial derivative in `var`, one order lower.
    pub fn partial(&self, var: usize) -> Result<Jet, JetError> {
        if self.order == 0 {
            return Err(JetError::InsufficientOrder { have: 0, need: 1 });
        }
        let t = table(self.dim());
        let k = self.order() - 1;
        let mut out = Jet::zero(self.dim(), k);
        for s in 0..out.c.len() {
            let src = t.raise[var][s] as usize;
            out.c[s] = self.c[src] * (t.exps[s][var] as f64 + 1.0);
        }
        Ok(out)
    }

    /// Antiderivative in `var` vanishing on `x_var = x0_var`, same order (top degree dropped).
    pub fn integrate(&self, var: usize) -> Jet {
        let t = table(self.dim());
        let k = self.order();
        let mut out = Jet::zero(self.dim(), k);
        for s in 0..num_coeffs(self.dim(), k.saturating_sub(1)) {
            if k == 0 {
                break;
            }
            let dst = t.raise[var][s] as usize;
            out.c[dst] = self.c[s] / (t.exps[s][var] as f64 + 1.0);
        }
        out
    }

    /// Substitutes `x_i - x0_i = inner[i] - inner[i].value()` into this jet.
    ///
    /// `inner` jets live in another variable set; the result has their
    /// dimension and order `min(self.order, inner order)`, which is exact
    /// because the substituted increments have no constant term.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        let pw = monomials(inner, self.order());
        self.compose_with(&pw)
    }

    /// Composition with precomputed increment monomials from [`monomials`].
    pub fn compose_with(&self, pw: &[Jet]) -> Jet {
        let k = pw[0].order().min(self.order());
        let dim = pw[0].dim();
        let mut out = Jet::zero(dim, k);
        let n = num_coeffs(self.dim(), k);
        for (s, m) in pw.iter().enumerate().take(n) {
            let a = self.c[s];
            if a != 0.0 {
                out.axpy(a, m);
            }
        }
        out
    }

    pub fn degree_of_slot(&self, s: usize) -> usize {
        table(self.dim()).degree[s] as usize
    }
}

/// Monomials `Π δ_i^{α_i}` of the increments `δ_i = inner[i] - value`, one per slot of
/// a jet in `inner.len()` variables up to `order` (capped by the inner order).
pub fn monomials(inner: &[Jet], order: usize) -> Vec<Jet> {
    let d = inner.len();
    let dim = inner[0].dim();
    let k = order.min(inner.iter().map(|j| j.order()).min().unwrap_or(0));
    let deltas: Vec<Jet> = inner.iter().map(|j| j.truncate(k).without_value()).collect();
    let t = table(d);
    let n = t.count[k];
    let mut pw: Vec<Jet> = Vec::with_capacity(n);
    pw.push(Jet::constant(dim, k, 1.0));
    for s in 1..n {
        let e = t.exps[s];
        let v = (0..d).find(|&v| e[v] > 0).expect("nonconstant slot");
        let mut prev = e;
        prev[v] -= 1;
        let ps = t.lookup[encode(&prev)] as usize;
        pw.push(pw[ps].mul_jet(&deltas[v]));
    }
    pw
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                let f: fn(&Jet, &Jet) -> Jet = $body;
                f(self, rhs)
            }
        }
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}

fn add_jets(a: &Jet, b: &Jet) -> Jet {
    assert_eq!(a.dim, b.dim, "jet dimension mismatch");
    let mut out = a.truncate(b.order());
    out.axpy(1.0, b);
    out
}

fn sub_jets(a: &Jet, b: &Jet) -> Jet {
    assert_eq!(a.dim, b.dim, "jet dimension mismatch");
    let mut out = a.truncate(b.order());
    out.axpy(-1.0, b);
    out
}

binop!(Add, add, add_jets);
binop!(Sub, sub, sub_jets);
binop!(Mul, mul, |a, b| a.mul_jet(b));

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.axpy(-1.0, rhs);
    }
}

/// Inverse of a square matrix of jets (row-major), via the Neumann series
/// around the inverse of the value matrix.
pub fn invert_matrix(m: &[Jet], n: usize) -> Result<Vec<Jet>, crate::GeoError> {
    let dim = m[0].dim();
    let order = m.iter().map(|j| j.order()).min().unwrap_or(0);
    let vals = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i * n + j].value());
    let lu = vals.clone().lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() < 1e-14 {
        return Err(crate::GeoError::SingularMatrix { det });
    }
    let inv0 = lu.try_inverse().ok_or(crate::GeoError::SingularMatrix { det })?;
    let c0: Vec<Jet> = (0..n * n)
        .map(|k| Jet::constant(dim, order, inv0[(k / n, k % n)]))
        .collect();
    // E = I - A0^{-1} M has no constant term; M^{-1} = (Σ_k E^k) A0^{-1}.
    let mut e: Vec<Jet> = vec![Jet::zero(dim, order); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::zero(dim, order);
            for k in 0..n {
                acc.axpy(-inv0[(i, k)], &m[k * n + j].truncate(order));
            }
            acc.c[0] = 0.0;
            e[i * n + j] = acc;
        }
    }
    let mut result = c0.clone();
    let mut term = c0;
    for _ in 0..order {
        term = mat_mul(&e, &term, n);
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    Ok(result)
}

/// Row-major product of two n×n jet matrices.
pub fn mat_mul(a: &[Jet], b: &[Jet], n: usize) -> Vec<Jet> {
    let dim = a[0].dim();
    let order = a.iter().chain(b).map(|j| j.order()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Jet::zero(dim, order);
            for k in 0..n {
                acc.mul_acc(&a[i * n + k], &b[k * n + j]);
            }
            out.push(acc);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes() {
        assert_eq!(num_coeffs(4, 4), 70);
        assert_eq!(num_coeffs(3, 2), 10);
        assert_eq!(num_coeffs(1, 4), 5);
    }

    #[test]
    fn product_of_coordinates() {
        let x = Jet::variable(4, 2, 0, 1.0);
        let y = Jet::variable(4, 2, 1, 2.0);
        let p = &x * &y;
        assert_eq!(p.value(), 2.0);
        assert_eq!(p.coeff(&[1, 1, 0, 0]), 1.0);
        assert_eq!(p.coeff(&[1, 0, 0, 0]), 2.0);
    }

    #[test]
    fn sine_taylor() {
        let x = Jet::variable(4, 3, 0, 0.0);
        let s = x.sin();
        assert!((s.coeff(&[1, 0, 0, 0]) - 1.0).abs() < 1e-15);
        assert!((s.coeff(&[3, 0, 0, 0]) + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn difference_of_squares() {
        let x = Jet::variable(1, 2, 0, 0.0);
        let p = (x.clone() + 1.0) * (-x + 1.0);
        assert_eq!(p.coeffs(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn self_division_is_one() {
        let x = Jet::variable(3, 4, 1, 0.7);
        let f = x.sin() + x.mul_jet(&x) + 2.0;
        let q = f.div_jet(&f).unwrap();
        assert!((q.value() - 1.0).abs() < 1e-15);
        assert!(q.coeffs()[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn sqrt_of_delta() {
        let r = Jet::variable(4, 2, 1, 4.0);
        let delta = r.mul_jet(&r) - r.scale(2.0);
        let s = delta.sqrt().unwrap();
        assert!((s.value() - 8f64.sqrt()).abs() < 1e-15);
        // (2r - 2m) / (2 sqrt(Delta)) = 6 / (2 sqrt 8)
        assert!((s.d(1) - 6.0 / (2.0 * 8f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn errors_are_reported() {
        let z = Jet::constant(2, 2, 0.0);
        assert_eq!(z.recip(), Err(JetError::DivisionByZero));
        assert!(matches!(z.sqrt(), Err(JetError::NonPositiveSqrt(_))));
        assert!(Jet::constant(2, 0, 1.0).partial(0).is_err());
    }

    #[test]
    fn truncation_is_prefix() {
        let x = Jet::variable(3, 4, 2, 0.3);
        let f = x.exp();
        let g = Jet::variable(3, 2, 2, 0.3).exp();
        assert_eq!(f.truncate(2), g);
    }

    #[test]
    fn partial_and_integrate_are_inverse() {
        let x = Jet::variable(2, 4, 0, 0.0);
        let y = Jet::variable(2, 4, 1, 0.0);
        let f = (&x * &y + x.sin()).mul_jet(&y.cos());
        let g = f.integrate(0).partial(0).unwrap();
        let ft = f.truncate(3);
        for (a, b) in g.coeffs().iter().zip(ft.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn composition_matches_direct_evaluation() {
        // f(x, y) = sin(x) * y about (0.2, 1.5), composed with x = 0.2 + s t, y = 1.5 + s.
        let x = Jet::variable(2, 4, 0, 0.2);
        let y = Jet::variable(2, 4, 1, 1.5);
        let f = x.sin().mul_jet(&y);
        let s = Jet::variable(2, 4, 0, 0.0);
        let t = Jet::variable(2, 4, 1, 0.0);
        let inner = vec![s.mul_jet(&t) + 0.2, s.clone() + 1.5];
        let composed = f.compose(&inner);
        let direct = (s.mul_jet(&t) + 0.2).sin().mul_jet(&(s + 1.5));
        for (a, b) in composed.coeffs().iter().zip(direct.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn matrix_inverse_series() {
        let x = Jet::variable(2, 3, 0, 0.1);
        let y = Jet::variable(2, 3, 1, -0.2);
        let m = vec![x.exp(), y.clone(), x.mul_jet(&y), y.cos() + 1.0];
        let inv = invert_matrix(&m, 2).unwrap();
        let id = mat_mul(&m, &inv, 2);
        for i in 0..2 {
            for j in 0..2 {
                let e = &id[i * 2 + j];
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e.value() - want).abs() < 1e-14);
                assert!(e.coeffs()[1..].iter().all(|c| c.abs() < 1e-13));
            }
        }
    }
}
