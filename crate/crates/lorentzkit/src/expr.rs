//! Expression trees over coordinates, liftable to jets.
//!
//! Nodes are reference counted so that shared subexpressions (q², Δ, sin θ)
//! are evaluated once per lift. Every tree has a canonical text form and a
//! SHA-256 hash used to tag reports.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::jet::{Jet, JetError};

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Sqrt(Expr),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
    Ln(Expr),
    Powi(Expr, i32),
    Powf(Expr, f64),
    /// max(a, 0)^n, C^{n-1} across a = 0.
    PosPowi(Expr, i32),
}

#[derive(Clone, Debug)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn new(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn c(v: f64) -> Expr {
        Expr::new(Node::Const(v))
    }

    pub fn var(i: usize) -> Expr {
        Expr::new(Node::Var(i))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::new(Node::Sqrt(self.clone()))
    }

    pub fn sin(&self) -> Expr {
        match self.as_const() {
            Some(v) => Expr::c(v.sin()),
            None => Expr::new(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.as_const() {
            Some(v) => Expr::c(v.cos()),
            None => Expr::new(Node::Cos(self.clone())),
        }
    }

    pub fn exp(&self) -> Expr {
        Expr::new(Node::Exp(self.clone()))
    }

    pub fn ln(&self) -> Expr {
        Expr::new(Node::Ln(self.clone()))
    }

    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => Expr::c(1.0),
            1 => self.clone(),
            _ => Expr::new(Node::Powi(self.clone(), n)),
        }
    }

    /// max(self, 0)^n for n ≥ 1; used for compactly supported bumps.
    pub fn pos_powi(&self, n: i32) -> Expr {
        assert!(n >= 1, "pos_powi needs a positive exponent");
        Expr::new(Node::PosPowi(self.clone(), n))
    }

    pub fn powf(&self, p: f64) -> Expr {
        Expr::new(Node::Powf(self.clone(), p))
    }

    /// Plain floating point evaluation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &*self.0 {
            Node::Const(v) => *v,
            Node::Var(i) => x[*i],
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Neg(a) => -a.eval(x),
            Node::Sqrt(a) => a.eval(x).sqrt(),
            Node::Sin(a) => a.eval(x).sin(),
            Node::Cos(a) => a.eval(x).cos(),
            Node::Exp(a) => a.eval(x).exp(),
            Node::Ln(a) => a.eval(x).ln(),
            Node::Powi(a, n) => a.eval(x).powi(*n),
            Node::Powf(a, p) => a.eval(x).powf(*p),
            Node::PosPowi(a, n) => a.eval(x).max(0.0).powi(*n),
        }
    }

    /// Taylor expansion of order `order` at the point `x`.
    pub fn lift(&self, x: &[f64], order: usize) -> Result<Jet, JetError> {
        let vars = variables(x, order);
        Evaluator::new(&vars).eval(self)
    }

    /// Canonical prefix form.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        self.write_canonical(&mut s);
        s
    }

    fn write_canonical(&self, s: &mut String) {
        use std::fmt::Write;
        let bin = |s: &mut String, op: &str, a: &Expr, b: &Expr| {
            s.push('(');
            s.push_str(op);
            s.push(' ');
            a.write_canonical(s);
            s.push(' ');
            b.write_canonical(s);
            s.push(')');
        };
        let un = |s: &mut String, op: &str, a: &Expr| {
            s.push('(');
            s.push_str(op);
            s.push(' ');
            a.write_canonical(s);
            s.push(')');
        };
        match &*self.0 {
            Node::Const(v) => {
                let _ = write!(s, "{v:?}");
            }
            Node::Var(i) => {
                let _ = write!(s, "x{i}");
            }
            Node::Add(a, b) => bin(s, "+", a, b),
            Node::Sub(a, b) => bin(s, "-", a, b),
            Node::Mul(a, b) => bin(s, "*", a, b),
            Node::Div(a, b) => bin(s, "/", a, b),
            Node::Neg(a) => un(s, "neg", a),
            Node::Sqrt(a) => un(s, "sqrt", a),
            Node::Sin(a) => un(s, "sin", a),
            Node::Cos(a) => un(s, "cos", a),
            Node::Exp(a) => un(s, "exp", a),
            Node::Ln(a) => un(s, "ln", a),
            Node::Powi(a, n) => {
                s.push_str("(powi ");
                a.write_canonical(s);
                let _ = write!(s, " {n})");
            }
            Node::Powf(a, p) => {
                s.push_str("(powf ");
                a.write_canonical(s);
                let _ = write!(s, " {p:?})");
            }
            Node::PosPowi(a, n) => {
                s.push_str("(pospowi ");
                a.write_canonical(s);
                let _ = write!(s, " {n})");
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// The coordinate jets `x_i` at a point.
pub fn variables(x: &[f64], order: usize) -> Vec<Jet> {
    (0..x.len())
        .map(|i| Jet::variable(x.len(), order, i, x[i]))
        .collect()
}

/// SHA-256 over the canonical forms of several expressions, hex encoded.
pub fn hash_exprs<'a>(exprs: impl IntoIterator<Item = &'a Expr>) -> String {
    let mut h = Sha256::new();
    for e in exprs {
        h.update(e.canonical().as_bytes());
        h.update(b";");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Evaluates expressions on jet inputs, caching shared nodes.
pub struct Evaluator<'a> {
    inputs: &'a [Jet],
    cache: HashMap<*const Node, Jet>,
}

impl<'a> Evaluator<'a> {
    pub fn new(inputs: &'a [Jet]) -> Self {
        Evaluator {
            inputs,
            cache: HashMap::new(),
        }
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Jet, JetError> {
        let key = Arc::as_ptr(&e.0);
        if let Some(j) = self.cache.get(&key) {
            return Ok(j.clone());
        }
        let base = &self.inputs[0];
        let out = match &*e.0 {
            Node::Const(v) => Jet::constant(base.dim(), base.order(), *v),
            Node::Var(i) => self.inputs[*i].clone(),
            Node::Add(a, b) => self.eval(a)? + self.eval(b)?,
            Node::Sub(a, b) => self.eval(a)? - self.eval(b)?,
            Node::Mul(a, b) => self.eval(a)? * self.eval(b)?,
            Node::Div(a, b) => {
                let na = self.eval(a)?;
                na.div_jet(&self.eval(b)?)?
            }
            Node::Neg(a) => -self.eval(a)?,
            Node::Sqrt(a) => self.eval(a)?.sqrt()?,
            Node::Sin(a) => self.eval(a)?.sin(),
            Node::Cos(a) => self.eval(a)?.cos(),
            Node::Exp(a) => self.eval(a)?.exp(),
            Node::Ln(a) => self.eval(a)?.ln()?,
            Node::Powi(a, n) => self.eval(a)?.powi(*n)?,
            Node::Powf(a, p) => self.eval(a)?.powf(*p)?,
            Node::PosPowi(a, n) => {
                let j = self.eval(a)?;
                if j.value() > 0.0 {
                    j.powi(*n)?
                } else {
                    Jet::zero(j.dim(), j.order())
                }
            }
        };
        self.cache.insert(key, out.clone());
        Ok(out)
    }
}

fn fold_add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::c(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::new(Node::Add(a, b)),
    }
}

fn fold_sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::c(x - y),
        (Some(x), _) if x == 0.0 => -b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::new(Node::Sub(a, b)),
    }
}

fn fold_mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::c(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::c(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::new(Node::Mul(a, b)),
    }
}

fn fold_div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), _) if x == 0.0 => Expr::c(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::new(Node::Div(a, b)),
    }
}

macro_rules! expr_op {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                $f(self, rhs)
            }
        }
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                $f(self.clone(), rhs.clone())
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                $f(self, rhs.clone())
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                $f(self.clone(), rhs)
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                $f(self, Expr::c(rhs))
            }
        }
        impl $tr<f64> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                $f(self.clone(), Expr::c(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                $f(Expr::c(self), rhs)
            }
        }
        impl $tr<&Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                $f(Expr::c(self), rhs.clone())
            }
        }
    };
}

expr_op!(Add, add, fold_add);
expr_op!(Sub, sub, fold_sub);
expr_op!(Mul, mul, fold_mul);
expr_op!(Div, div, fold_div);

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.as_const() {
            Some(v) => Expr::c(-v),
            None => Expr::new(Node::Neg(self)),
        }
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_polynomial() {
        let f = Expr::var(0) * Expr::var(1);
        let j = f.lift(&[1.0, 2.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(j.value(), 2.0);
        assert_eq!(j.coeff(&[1, 1, 0, 0]), 1.0);
    }

    #[test]
    fn clamped_power_vanishes_outside_support() {
        let f = (1.0 - Expr::var(0) * Expr::var(0)).pos_powi(5);
        assert_eq!(f.eval(&[1.5]), 0.0);
        assert_eq!(f.lift(&[1.5], 3).unwrap().max_abs(), 0.0);
        let j = f.lift(&[0.5], 2).unwrap();
        assert!((j.value() - 0.75f64.powi(5)).abs() < 1e-15);
        assert!((j.d(0) + 10.0 * 0.5 * 0.75f64.powi(4)).abs() < 1e-14);
        assert!(f.canonical().starts_with("(pospowi"));
    }

    #[test]
    fn ernst_x_value() {
        let (m, a) = (1.0, 0.5);
        let th = Expr::var(0);
        let r = Expr::var(1);
        let q2 = &r * &r + a * a * th.cos().powi(2);
        let x = (2.0 * m * &r - &q2) / &q2;
        let p = [std::f64::consts::FRAC_PI_3, 3.0];
        let q2v = 9.0 + 0.25 * 0.25;
        let want = (6.0 - q2v) / q2v;
        assert!((x.lift(&p, 3).unwrap().value() - want).abs() < 1e-15);
        assert!((x.eval(&p) - want).abs() < 1e-15);
    }

    #[test]
    fn canonical_form_and_hash_are_stable() {
        let f = (Expr::var(0) + 1.0).sin() * 2.5;
        assert_eq!(f.canonical(), "(* (sin (+ x0 1.0)) 2.5)");
        assert_eq!(hash_exprs([&f]), hash_exprs([&f.clone()]));
        assert_ne!(hash_exprs([&f]), hash_exprs([&(f.clone() + 1.0)]));
    }

    #[test]
    fn folding_keeps_zero_components_constant() {
        let z = Expr::c(0.0) * Expr::var(2).sin() + Expr::c(0.0);
        assert!(z.is_zero());
    }
}
