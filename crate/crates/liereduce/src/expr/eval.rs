//! Numeric evaluation: a floating path for probabilistic identity testing
//! and an exact rational path for rank decisions in the algebra layer.
//!
//! The exact path cannot evaluate transcendentals, so each distinct
//! transcendental sub-value is replaced by a deterministic pseudo-random
//! rational (the washout value). Identical canonical sub-values map to the
//! same rational, so every relation the canonical form exposes survives;
//! relations beyond the rewrite set may not, which is why every consumer of
//! the exact path re-checks its conclusions symbolically.

use super::{Expr, Func, Node, Rational};
use crate::error::Error;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    Unbound(String),
    Domain(String),
    NonFinite,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unbound(v) => write!(f, "unbound variable `{v}`"),
            EvalError::Domain(m) => write!(f, "{m}"),
            EvalError::NonFinite => write!(f, "non-finite intermediate value"),
        }
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Error {
        match e {
            EvalError::Unbound(v) => Error::Unbound(v),
            other => Error::Domain(other.to_string()),
        }
    }
}

/// Point in variable space with floating coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPoint {
    values: BTreeMap<String, f64>,
}

impl EvalPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Self {
        let mut p = Self::new();
        for (k, v) in pairs {
            p.set(*k, *v);
        }
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.values.iter()
    }
}

impl fmt::Display for EvalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, v) in &self.values {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{k}={v}")?;
            first = false;
        }
        Ok(())
    }
}

/// Point in variable space with exact rational coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RationalPoint {
    values: BTreeMap<String, Rational>,
}

impl RationalPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: Rational) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Rational> {
        self.values.get(name)
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Evaluates an expression at a floating point.
pub fn evaluate(e: &Expr, p: &EvalPoint) -> Result<f64, EvalError> {
    match e.node() {
        Node::Num(q) => finite(q.to_f64().unwrap_or(f64::NAN)),
        Node::Var(v) => p.get(v).ok_or_else(|| EvalError::Unbound(v.clone())),
        Node::Fun(f, a) => {
            let av = evaluate(a, p)?;
            match f {
                Func::Exp => finite(av.exp()),
                Func::Ln => {
                    if av <= 0.0 {
                        Err(EvalError::Domain(format!("ln of non-positive value {av}")))
                    } else {
                        finite(av.ln())
                    }
                }
                Func::Sin => finite(av.sin()),
                Func::Cos => finite(av.cos()),
            }
        }
        Node::Pow(b, ex) => {
            let bv = evaluate(b, p)?;
            let ev = evaluate(ex, p)?;
            pow_f64(bv, ev)
        }
        Node::Prod(fs) => {
            let mut acc = 1.0;
            for f in fs {
                acc *= evaluate(f, p)?;
            }
            finite(acc)
        }
        Node::Sum(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += evaluate(t, p)?;
            }
            finite(acc)
        }
    }
}

fn pow_f64(b: f64, e: f64) -> Result<f64, EvalError> {
    if b > 0.0 {
        return finite(b.powf(e));
    }
    if b == 0.0 {
        if e > 0.0 {
            return Ok(0.0);
        }
        return Err(EvalError::Domain(format!(
            "zero raised to non-positive exponent {e}"
        )));
    }
    // Negative base: only integer exponents are defined over the reals.
    if e.fract() == 0.0 && e.abs() < 2_147_483_648.0 {
        return finite(b.powi(e as i32));
    }
    Err(EvalError::Domain(format!(
        "negative base {b} raised to non-integer exponent {e}"
    )))
}

/// Deterministic source of washout rationals for transcendental sub-values.
/// The value is a pure function of (seed, canonical key), so evaluation order
/// never affects results.
#[derive(Debug, Clone, Copy)]
pub struct Washout {
    seed: u64,
}

impl Washout {
    pub fn new(seed: u64) -> Self {
        Washout { seed }
    }

    fn value(&self, key: &str) -> Rational {
        let h = fnv64(self.seed, key.as_bytes());
        // Rationals in [1/2, 9/2) with 2^18 distinct buckets.
        let numer = 32768 + (h % 262144);
        Rational::new(BigInt::from(numer), BigInt::from(65536u64))
    }
}

fn fnv64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Evaluates an expression at an exact rational point. Transcendental
/// sub-values are replaced by washout rationals as documented above.
pub fn evaluate_rational(e: &Expr, p: &RationalPoint, w: &Washout) -> Result<Rational, EvalError> {
    match e.node() {
        Node::Num(q) => Ok(q.clone()),
        Node::Var(v) => p
            .get(v)
            .cloned()
            .ok_or_else(|| EvalError::Unbound(v.clone())),
        Node::Fun(f, a) => {
            let av = evaluate_rational(a, p, w)?;
            // Exact special values keep identities like exp(u - u) = 1 intact
            // even when the cancellation only appears after substitution.
            match f {
                Func::Exp if av.is_zero() => return Ok(Rational::one()),
                Func::Ln if av.is_one() => return Ok(Rational::zero()),
                Func::Sin if av.is_zero() => return Ok(Rational::zero()),
                Func::Cos if av.is_zero() => return Ok(Rational::one()),
                Func::Ln if !av.is_positive() => {
                    return Err(EvalError::Domain(format!("ln of non-positive value {av}")))
                }
                _ => {}
            }
            Ok(w.value(&format!("{}|{av}", f.name())))
        }
        Node::Pow(b, ex) => {
            let bv = evaluate_rational(b, p, w)?;
            let ev = evaluate_rational(ex, p, w)?;
            if ev.is_integer() {
                if let Some(n) = ev.to_integer().to_i64() {
                    if n.abs() <= 1024 {
                        if bv.is_zero() {
                            if n > 0 {
                                return Ok(Rational::zero());
                            }
                            return Err(EvalError::Domain(
                                "zero raised to non-positive exponent".into(),
                            ));
                        }
                        return Ok(super::rational_powi(&bv, n));
                    }
                }
            }
            if bv.is_zero() {
                if ev.is_positive() {
                    return Ok(Rational::zero());
                }
                return Err(EvalError::Domain(
                    "zero raised to non-positive exponent".into(),
                ));
            }
            if !bv.is_positive() {
                return Err(EvalError::Domain(
                    "negative base raised to non-integer exponent".into(),
                ));
            }
            if let Some(exact) = super::fold_rational_pow(&bv, &ev) {
                return Ok(exact);
            }
            Ok(w.value(&format!("pow|{bv}|{ev}")))
        }
        Node::Prod(fs) => {
            let mut acc = Rational::one();
            for f in fs {
                acc *= evaluate_rational(f, p, w)?;
            }
            Ok(acc)
        }
        Node::Sum(ts) => {
            let mut acc = Rational::zero();
            for t in ts {
                acc += evaluate_rational(t, p, w)?;
            }
            Ok(acc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_arithmetic() {
        let e = Expr::add(
            Expr::mul(Expr::int(2), Expr::var("x")),
            Expr::powi(Expr::var("y"), 2),
        );
        let p = EvalPoint::from_pairs(&[("x", 1.5), ("y", 2.0)]);
        assert_eq!(evaluate(&e, &p).unwrap(), 7.0);
    }

    #[test]
    fn transcendentals() {
        let e = Expr::mul(Expr::exp(Expr::var("t")), Expr::ln(Expr::var("x")));
        let p = EvalPoint::from_pairs(&[("t", 0.0), ("x", 1.0)]);
        assert_eq!(evaluate(&e, &p).unwrap(), 0.0);
        let p = EvalPoint::from_pairs(&[("t", 1.0), ("x", std::f64::consts::E)]);
        let v = evaluate(&e, &p).unwrap();
        assert!((v - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        let p = EvalPoint::from_pairs(&[("x", -1.0)]);
        assert!(matches!(
            evaluate(&Expr::ln(Expr::var("x")), &p),
            Err(EvalError::Domain(_))
        ));
        assert!(matches!(
            evaluate(&Expr::sqrt(Expr::var("x")), &p),
            Err(EvalError::Domain(_))
        ));
        let e = Expr::div(Expr::one(), Expr::var("z"));
        let p = EvalPoint::from_pairs(&[("z", 0.0)]);
        assert!(evaluate(&e, &p).is_err());
    }

    #[test]
    fn unbound_variable_reported() {
        let e = Expr::var("missing");
        assert_eq!(
            evaluate(&e, &EvalPoint::new()),
            Err(EvalError::Unbound("missing".into()))
        );
    }

    #[test]
    fn rational_path_is_exact_on_rational_expressions() {
        let e = Expr::div(
            Expr::powi(Expr::add(Expr::var("x"), Expr::one()), 2),
            Expr::var("y"),
        );
        let mut p = RationalPoint::new();
        p.set("x", Rational::new(1.into(), 2.into()));
        p.set("y", Rational::new(3.into(), 4.into()));
        let v = evaluate_rational(&e, &p, &Washout::new(0)).unwrap();
        assert_eq!(v, Rational::new(3.into(), 1.into()));
    }

    #[test]
    fn washout_is_consistent_per_subvalue() {
        let w = Washout::new(7);
        let mut p = RationalPoint::new();
        p.set("t", Rational::new(1.into(), 3.into()));
        // exp(t)*exp(t) must equal exp(t)^2 after canonical merging; both
        // involve the single sub-value exp(2/3).
        let a = Expr::mul(Expr::exp(Expr::var("t")), Expr::exp(Expr::var("t")));
        let b = Expr::powi(Expr::exp(Expr::var("t")), 2);
        assert_eq!(
            evaluate_rational(&a, &p, &w).unwrap(),
            evaluate_rational(&b, &p, &w).unwrap()
        );
        // Different seeds give different washout values.
        let v1 = evaluate_rational(&Expr::exp(Expr::var("t")), &p, &w).unwrap();
        let v2 = evaluate_rational(&Expr::exp(Expr::var("t")), &p, &Washout::new(8)).unwrap();
        assert_ne!(v1, v2);
    }

    #[test]
    fn exact_special_values_survive_washout() {
        let w = Washout::new(1);
        let mut p = RationalPoint::new();
        p.set("u", Rational::new(5.into(), 7.into()));
        let e = Expr::exp(Expr::sub(Expr::var("u"), Expr::var("u")));
        assert_eq!(evaluate_rational(&e, &p, &w).unwrap(), Rational::one());
    }
}
