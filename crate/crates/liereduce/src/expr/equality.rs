//! Seeded randomized identity testing.
//!
//! Two expressions are compared by evaluating both at random points drawn
//! from per-variable boxes. A disagreement at any point is a proof of
//! inequality (reported with the witness point); agreement at every point is
//! probabilistic evidence of equality. Identical inputs always yield the
//! identical verdict: the sample stream is a pure function of the seed and
//! the canonical forms being compared.

use super::eval::{evaluate, EvalError, EvalPoint};
use super::{Expr, Rational};
use crate::error::{Error, Result};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;

/// Sampling box and tolerance settings for probabilistic identity checks.
#[derive(Debug, Clone)]
pub struct EqualityConfig {
    pub seed: u64,
    /// Number of sample points; values below 3 are raised to 3.
    pub trials: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Default sampling interval, kept away from zero so that logarithms and
    /// denominators stay regular.
    pub default_box: (Rational, Rational),
    /// Per-variable overrides of the sampling interval.
    pub boxes: BTreeMap<String, (Rational, Rational)>,
}

impl Default for EqualityConfig {
    fn default() -> Self {
        EqualityConfig {
            seed: 0,
            trials: 8,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            default_box: (
                Rational::new(1.into(), 2.into()),
                Rational::new(2.into(), 1.into()),
            ),
            boxes: BTreeMap::new(),
        }
    }
}

impl EqualityConfig {
    pub fn with_seed(seed: u64) -> Self {
        EqualityConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn effective_trials(&self) -> usize {
        self.trials.max(3)
    }

    pub fn box_for(&self, var: &str) -> (f64, f64) {
        let (lo, hi) = self.boxes.get(var).unwrap_or(&self.default_box);
        (lo.to_f64().unwrap_or(0.5), hi.to_f64().unwrap_or(2.0))
    }
}

/// Counterexample to an identity: the point and the two values observed.
#[derive(Debug, Clone)]
pub struct Witness {
    pub point: EvalPoint,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Equal,
    Unequal(Witness),
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Verdict::Equal)
    }
}

fn fnv64(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Stream seed derived from the pair being compared, symmetric in the two
/// operands so that equals(a, b) and equals(b, a) agree.
fn pair_seed(seed: u64, a: &Expr, b: &Expr) -> u64 {
    let (s1, s2) = {
        let sa = a.to_string();
        let sb = b.to_string();
        if sa <= sb {
            (sa, sb)
        } else {
            (sb, sa)
        }
    };
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    h = fnv64(h, s1.as_bytes());
    h = fnv64(h, &[0x1f]);
    h = fnv64(h, s2.as_bytes());
    h
}

const MAX_ATTEMPTS_PER_TRIAL: usize = 64;

/// Draws one point for the union of free variables of both expressions.
fn draw_point(vars: &[String], cfg: &EqualityConfig, rng: &mut ChaCha20Rng) -> EvalPoint {
    let mut p = EvalPoint::new();
    for v in vars {
        let (lo, hi) = cfg.box_for(v);
        let u: f64 = rng.gen();
        p.set(v.clone(), lo + u * (hi - lo));
    }
    p
}

pub fn values_close(a: f64, b: f64, cfg: &EqualityConfig) -> bool {
    let diff = (a - b).abs();
    diff <= cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())
}

/// Probabilistic identity test. A structural match short-circuits to Equal;
/// otherwise both sides are evaluated at `trials` random points. Points that
/// fall outside a partial function's domain are re-drawn a bounded number of
/// times; exhausting the retries is an error, not a verdict.
pub fn equals_probabilistic(a: &Expr, b: &Expr, cfg: &EqualityConfig) -> Result<Verdict> {
    if a == b {
        return Ok(Verdict::Equal);
    }
    let mut vars: Vec<String> = a.free_vars().into_iter().collect();
    for v in b.free_vars() {
        if !vars.contains(&v) {
            vars.push(v);
        }
    }
    vars.sort();
    let mut rng = ChaCha20Rng::seed_from_u64(pair_seed(cfg.seed, a, b));
    for _ in 0..cfg.effective_trials() {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS_PER_TRIAL {
            let p = draw_point(&vars, cfg, &mut rng);
            let va = match evaluate(a, &p) {
                Ok(v) => v,
                Err(EvalError::Unbound(v)) => return Err(Error::Unbound(v)),
                Err(_) => continue,
            };
            let vb = match evaluate(b, &p) {
                Ok(v) => v,
                Err(EvalError::Unbound(v)) => return Err(Error::Unbound(v)),
                Err(_) => continue,
            };
            accepted = Some((p, va, vb));
            break;
        }
        let Some((point, lhs, rhs)) = accepted else {
            return Err(Error::ExhaustedSampling {
                attempts: MAX_ATTEMPTS_PER_TRIAL,
                context: format!("comparing `{a}` with `{b}`"),
            });
        };
        if !values_close(lhs, rhs, cfg) {
            return Ok(Verdict::Unequal(Witness { point, lhs, rhs }));
        }
    }
    Ok(Verdict::Equal)
}

/// Convenience wrapper: probabilistic test against zero.
pub fn is_zero_probabilistic(e: &Expr, cfg: &EqualityConfig) -> Result<Verdict> {
    equals_probabilistic(e, &Expr::zero(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_square_identity() {
        let x = Expr::var("x");
        let a = Expr::powi(Expr::add(x.clone(), Expr::one()), 2);
        let b = Expr::sum(vec![
            Expr::powi(x.clone(), 2),
            Expr::mul(Expr::int(2), x.clone()),
            Expr::one(),
        ]);
        let v = equals_probabilistic(&a, &b, &EqualityConfig::default()).unwrap();
        assert!(v.is_equal());
    }

    #[test]
    fn log_of_product_identity_on_positive_box() {
        let (x, y) = (Expr::var("x"), Expr::var("y"));
        let a = Expr::ln(Expr::mul(x.clone(), y.clone()));
        let b = Expr::add(Expr::ln(x), Expr::ln(y));
        let v = equals_probabilistic(&a, &b, &EqualityConfig::default()).unwrap();
        assert!(v.is_equal());
    }

    #[test]
    fn perturbed_expression_detected_with_witness() {
        let x = Expr::var("x");
        let a = x.clone();
        let b = Expr::add(x, Expr::ratio(1, 1000));
        match equals_probabilistic(&a, &b, &EqualityConfig::default()).unwrap() {
            Verdict::Unequal(w) => {
                assert!((w.lhs - w.rhs).abs() > 1e-4);
                assert!(w.point.get("x").is_some());
            }
            Verdict::Equal => panic!("perturbation not detected"),
        }
    }

    #[test]
    fn same_seed_same_verdict() {
        let a = Expr::sin(Expr::var("x"));
        let b = Expr::var("x");
        let cfg = EqualityConfig::with_seed(42);
        let v1 = equals_probabilistic(&a, &b, &cfg).unwrap();
        let v2 = equals_probabilistic(&a, &b, &cfg).unwrap();
        match (v1, v2) {
            (Verdict::Unequal(w1), Verdict::Unequal(w2)) => {
                assert_eq!(w1.point, w2.point);
                assert_eq!(w1.lhs, w2.lhs);
            }
            _ => panic!("sin x = x should be rejected"),
        }
    }

    #[test]
    fn symmetric_in_operands() {
        let a = Expr::exp(Expr::var("t"));
        let b = Expr::add(Expr::one(), Expr::var("t"));
        let cfg = EqualityConfig::default();
        let v1 = equals_probabilistic(&a, &b, &cfg).unwrap();
        let v2 = equals_probabilistic(&b, &a, &cfg).unwrap();
        match (v1, v2) {
            (Verdict::Unequal(w1), Verdict::Unequal(w2)) => {
                assert_eq!(w1.point, w2.point);
            }
            _ => panic!("exp t = 1 + t should be rejected"),
        }
    }

    #[test]
    fn trials_clamped_to_minimum() {
        let cfg = EqualityConfig {
            trials: 1,
            ..Default::default()
        };
        assert_eq!(cfg.effective_trials(), 3);
    }

    #[test]
    fn domain_constrained_comparison_retries() {
        // sqrt(x - 2) forces redraws on [1/2, 2] yet x near 2 can succeed; use
        // a shifted box instead so the domain is satisfiable.
        let mut cfg = EqualityConfig::default();
        cfg.boxes.insert(
            "x".into(),
            (Rational::from_integer(3.into()), Rational::from_integer(5.into())),
        );
        let a = Expr::sqrt(Expr::sub(Expr::var("x"), Expr::int(2)));
        let b = Expr::pow(Expr::sub(Expr::var("x"), Expr::int(2)), Expr::ratio(1, 2));
        assert!(equals_probabilistic(&a, &b, &cfg).unwrap().is_equal());
    }

    #[test]
    fn impossible_domain_exhausts() {
        // ln(-x) has empty domain on a positive box.
        let e = Expr::ln(Expr::neg(Expr::var("x")));
        let err = equals_probabilistic(&e, &Expr::zero(), &EqualityConfig::default());
        assert!(matches!(err, Err(Error::ExhaustedSampling { .. })));
    }
}
