//! Immutable symbolic expressions over exact rational constants.
//!
//! Every constructor canonicalizes: sums are flattened with like terms
//! collected, products are flattened with powers of a common base merged,
//! rational constants fold exactly, and the inverse pairs exp(ln u) / ln(exp u)
//! rewrite away. Structural equality of canonical trees is therefore a cheap
//! deterministic equivalence test; mathematical equality beyond the rewrite
//! set is the job of [`equals_probabilistic`].

mod calculus;
mod display;
mod equality;
mod eval;
mod linsolve;

pub use equality::{equals_probabilistic, is_zero_probabilistic, EqualityConfig, Verdict, Witness};
pub use eval::{evaluate, evaluate_rational, EvalError, EvalPoint, RationalPoint, Washout};
pub use linsolve::solve_linear_symbolic;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

pub type Rational = BigRational;

/// Transcendental function tags carried by a function node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(PartialEq, Eq, Hash, Debug)]
pub enum Node {
    /// Exact rational constant in lowest terms.
    Num(Rational),
    /// Free variable referenced by name.
    Var(String),
    /// Unary transcendental application.
    Fun(Func, Expr),
    /// Power with an arbitrary expression exponent; rational exponents are
    /// `Num` nodes, integers among them have denominator one.
    Pow(Expr, Expr),
    /// Flattened product: at least two factors, optional leading rational
    /// coefficient, remaining factors sorted and base-distinct.
    Prod(Vec<Expr>),
    /// Flattened sum: at least two terms, at most one rational term,
    /// like terms collected, sorted by core.
    Sum(Vec<Expr>),
}

/// Canonical immutable expression. Cloning is cheap (shared subtrees).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self)
    }
}

fn rank(n: &Node) -> u8 {
    match n {
        Node::Num(_) => 0,
        Node::Var(_) => 1,
        Node::Fun(_, _) => 2,
        Node::Pow(_, _) => 3,
        Node::Prod(_) => 4,
        Node::Sum(_) => 5,
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.node(), other.node());
        rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
            (Node::Num(x), Node::Num(y)) => x.cmp(y),
            (Node::Var(x), Node::Var(y)) => x.cmp(y),
            (Node::Fun(f, x), Node::Fun(g, y)) => f.cmp(g).then_with(|| x.cmp(y)),
            (Node::Pow(b1, e1), Node::Pow(b2, e2)) => b1.cmp(b2).then_with(|| e1.cmp(e2)),
            (Node::Prod(x), Node::Prod(y)) | (Node::Sum(x), Node::Sum(y)) => x.cmp(y),
            _ => unreachable!("rank already distinguished the variants"),
        })
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    fn raw(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn num(r: Rational) -> Expr {
        Expr::raw(Node::Num(r))
    }

    pub fn int(i: i64) -> Expr {
        Expr::num(Rational::from(BigInt::from(i)))
    }

    pub fn ratio(n: i64, d: i64) -> Expr {
        assert!(d != 0, "rational literal with zero denominator");
        Expr::num(Rational::new(BigInt::from(n), BigInt::from(d)))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::raw(Node::Var(name.into()))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(self.node(), Node::Num(q) if q.is_one())
    }

    pub fn as_num(&self) -> Option<&Rational> {
        match self.node() {
            Node::Num(q) => Some(q),
            _ => None,
        }
    }

    /// Exact integer value of the expression, when it is one.
    pub fn as_integer(&self) -> Option<BigInt> {
        match self.node() {
            Node::Num(q) if q.is_integer() => Some(q.to_integer()),
            _ => None,
        }
    }

    pub fn fun(f: Func, arg: Expr) -> Expr {
        match (f, arg.node()) {
            (Func::Exp, Node::Num(q)) if q.is_zero() => Expr::one(),
            (Func::Ln, Node::Num(q)) if q.is_one() => Expr::zero(),
            (Func::Sin, Node::Num(q)) if q.is_zero() => Expr::zero(),
            (Func::Cos, Node::Num(q)) if q.is_zero() => Expr::one(),
            (Func::Exp, Node::Fun(Func::Ln, u)) => u.clone(),
            (Func::Ln, Node::Fun(Func::Exp, u)) => u.clone(),
            _ => Expr::raw(Node::Fun(f, arg)),
        }
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::fun(Func::Exp, arg)
    }

    pub fn ln(arg: Expr) -> Expr {
        Expr::fun(Func::Ln, arg)
    }

    pub fn sin(arg: Expr) -> Expr {
        Expr::fun(Func::Sin, arg)
    }

    pub fn cos(arg: Expr) -> Expr {
        Expr::fun(Func::Cos, arg)
    }

    /// Square roots are stored as rational powers.
    pub fn sqrt(arg: Expr) -> Expr {
        Expr::pow(arg, Expr::ratio(1, 2))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, b])
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, Expr::neg(b)])
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::mul(Expr::int(-1), a)
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, b])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, Expr::pow(b, Expr::int(-1))])
    }

    pub fn powi(base: Expr, e: i64) -> Expr {
        Expr::pow(base, Expr::int(e))
    }

    /// Canonical sum: flatten, fold constants, collect like terms, sort.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut constant = Rational::zero();
        let mut cores: BTreeMap<Expr, Rational> = BTreeMap::new();
        let mut stack = terms;
        while let Some(t) = stack.pop() {
            match t.node() {
                Node::Sum(ts) => stack.extend(ts.iter().cloned()),
                Node::Num(q) => constant += q,
                _ => {
                    let (c, core) = split_coefficient(&t);
                    let slot = cores.entry(core).or_insert_with(Rational::zero);
                    *slot += c;
                }
            }
        }
        let mut out: Vec<Expr> = Vec::new();
        for (core, c) in cores {
            if c.is_zero() {
                continue;
            }
            out.push(attach_coefficient(c, core));
        }
        if !constant.is_zero() || out.is_empty() {
            out.push(Expr::num(constant));
        }
        out.sort();
        if out.len() == 1 {
            return out.pop().unwrap();
        }
        Expr::raw(Node::Sum(out))
    }

    /// Canonical product: flatten, fold constants, merge powers of a common
    /// base, merge exponential factors into one exp of the summed arguments.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut coeff = Rational::one();
        let mut bases: BTreeMap<Expr, Vec<Expr>> = BTreeMap::new();
        let mut exp_args: Vec<Expr> = Vec::new();
        let mut stack = factors;
        while let Some(f) = stack.pop() {
            match f.node() {
                Node::Prod(fs) => stack.extend(fs.iter().cloned()),
                Node::Num(q) => {
                    if q.is_zero() {
                        return Expr::zero();
                    }
                    coeff *= q;
                }
                Node::Fun(Func::Exp, a) => exp_args.push(a.clone()),
                Node::Pow(b, e) => bases.entry(b.clone()).or_default().push(e.clone()),
                _ => bases.entry(f.clone()).or_default().push(Expr::one()),
            }
        }
        // Rebuilt factors can fold further (numeric powers, exp of a collapsed
        // ln, a distributed power); push those back through the same absorber.
        let mut rebuilt: Vec<Expr> = Vec::new();
        let mut pending: Vec<Expr> = Vec::new();
        for (base, exps) in bases {
            let e = Expr::sum(exps);
            if e.is_zero() {
                continue;
            }
            let p = Expr::pow(base, e);
            match p.node() {
                Node::Num(_) | Node::Prod(_) | Node::Fun(Func::Exp, _) => pending.push(p),
                _ => rebuilt.push(p),
            }
        }
        if !exp_args.is_empty() {
            let ea = Expr::sum(exp_args);
            if !ea.is_zero() {
                let ef = Expr::exp(ea);
                if matches!(ef.node(), Node::Fun(Func::Exp, _)) {
                    // Stable merged exponential; bases never hold exp, so no
                    // further merging is possible.
                    rebuilt.push(ef);
                } else {
                    // exp(ln u) or exp(0) folded away; re-absorb the result.
                    pending.push(ef);
                }
            }
        }
        if !pending.is_empty() {
            pending.extend(rebuilt);
            pending.push(Expr::num(coeff));
            return Expr::product(pending);
        }
        if coeff.is_zero() {
            return Expr::zero();
        }
        if rebuilt.is_empty() {
            return Expr::num(coeff);
        }
        // Distribute over sum factors so canonical form is fully expanded;
        // like terms can then always collect structurally.
        if let Some(i) = rebuilt
            .iter()
            .position(|f| matches!(f.node(), Node::Sum(_)))
        {
            let sum = rebuilt.remove(i);
            let Node::Sum(ts) = sum.node() else { unreachable!() };
            let terms = ts
                .iter()
                .map(|t| {
                    let mut fs = Vec::with_capacity(rebuilt.len() + 2);
                    fs.push(Expr::num(coeff.clone()));
                    fs.push(t.clone());
                    fs.extend(rebuilt.iter().cloned());
                    Expr::product(fs)
                })
                .collect();
            return Expr::sum(terms);
        }
        rebuilt.sort();
        if coeff.is_one() && rebuilt.len() == 1 {
            return rebuilt.pop().unwrap();
        }
        let mut out = Vec::with_capacity(rebuilt.len() + 1);
        if !coeff.is_one() {
            out.push(Expr::num(coeff));
        }
        out.extend(rebuilt);
        if out.len() == 1 {
            return out.pop().unwrap();
        }
        Expr::raw(Node::Prod(out))
    }

    /// Canonical power. Folds rational bases with small integer exponents,
    /// takes exact roots when they exist, merges nested powers, distributes
    /// over products, and rewrites exp(u)^e to exp(u*e). The power-of-power
    /// and distribution rules assume positive bases, consistent with the
    /// positive sampling boxes used throughout.
    pub fn pow(base: Expr, expo: Expr) -> Expr {
        if expo.is_zero() {
            return Expr::one();
        }
        if expo.is_one() {
            return base;
        }
        match base.node() {
            Node::Num(q) => {
                if q.is_one() {
                    return Expr::one();
                }
                if let Node::Num(e) = expo.node() {
                    if q.is_zero() {
                        if e.is_positive() {
                            return Expr::zero();
                        }
                        // 0 raised to a non-positive power: keep symbolic,
                        // evaluation reports the domain error.
                        return Expr::raw(Node::Pow(base, expo));
                    }
                    if let Some(folded) = fold_rational_pow(q, e) {
                        return Expr::num(folded);
                    }
                }
                Expr::raw(Node::Pow(base, expo))
            }
            Node::Pow(b2, e2) => Expr::pow(b2.clone(), Expr::mul(e2.clone(), expo)),
            Node::Prod(fs) => {
                let parts = fs
                    .iter()
                    .map(|f| Expr::pow(f.clone(), expo.clone()))
                    .collect();
                Expr::product(parts)
            }
            Node::Fun(Func::Exp, a) => Expr::exp(Expr::mul(a.clone(), expo)),
            Node::Sum(ts) => {
                if let Some((common, reduced)) = sum_common_factor(ts) {
                    return Expr::mul(
                        Expr::pow(common, expo.clone()),
                        Expr::pow(reduced, expo),
                    );
                }
                if let Node::Num(e) = expo.node() {
                    if e.is_integer() {
                        if let Some(n) = e.to_integer().to_i64() {
                            if (2..=EXPAND_POW_MAX).contains(&n) {
                                return expand_sum_power(ts, n);
                            }
                        }
                    }
                    // Unexpanded sum bases are kept primitive: the rational
                    // content moves out so equal multiples share one form.
                    let mut content = sum_content(ts);
                    if !e.is_integer() && content.is_negative() {
                        content = -content;
                    }
                    if !content.is_one() && !content.is_zero() {
                        let inv = Expr::num(content.recip());
                        let primitive = Expr::sum(
                            ts.iter()
                                .map(|t| Expr::mul(inv.clone(), t.clone()))
                                .collect(),
                        );
                        return Expr::mul(
                            Expr::pow(Expr::num(content), expo.clone()),
                            Expr::pow(primitive, expo),
                        );
                    }
                }
                Expr::raw(Node::Pow(base, expo))
            }
            _ => Expr::raw(Node::Pow(base, expo)),
        }
    }

    /// Rebuilds the tree bottom-up through the canonical constructors.
    /// Canonical trees are fixed points, so the operation is idempotent.
    pub fn simplify(&self) -> Expr {
        match self.node() {
            Node::Num(_) | Node::Var(_) => self.clone(),
            Node::Fun(f, a) => Expr::fun(*f, a.simplify()),
            Node::Pow(b, e) => Expr::pow(b.simplify(), e.simplify()),
            Node::Prod(fs) => Expr::product(fs.iter().map(|f| f.simplify()).collect()),
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.simplify()).collect()),
        }
    }

    /// Free variable names, sorted.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self.node() {
            Node::Num(_) => {}
            Node::Var(v) => {
                out.insert(v.clone());
            }
            Node::Fun(_, a) => a.collect_vars(out),
            Node::Pow(b, e) => {
                b.collect_vars(out);
                e.collect_vars(out);
            }
            Node::Prod(es) | Node::Sum(es) => {
                for e in es {
                    e.collect_vars(out);
                }
            }
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self.node() {
            Node::Num(_) => false,
            Node::Var(v) => v == name,
            Node::Fun(_, a) => a.contains_var(name),
            Node::Pow(b, e) => b.contains_var(name) || e.contains_var(name),
            Node::Prod(es) | Node::Sum(es) => es.iter().any(|e| e.contains_var(name)),
        }
    }

    /// Simultaneous substitution of variables by expressions.
    pub fn substitute(&self, map: &BTreeMap<String, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        match self.node() {
            Node::Num(_) => self.clone(),
            Node::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Node::Fun(f, a) => Expr::fun(*f, a.substitute(map)),
            Node::Pow(b, e) => Expr::pow(b.substitute(map), e.substitute(map)),
            Node::Prod(fs) => Expr::product(fs.iter().map(|f| f.substitute(map)).collect()),
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.substitute(map)).collect()),
        }
    }

    /// Substitution of a single variable.
    pub fn substitute_var(&self, name: &str, value: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(name.to_string(), value.clone());
        self.substitute(&map)
    }

    /// Multiplies through by the least common denominator visible at the
    /// top level: every factor `base^(-p)` with a numeric exponent is
    /// cancelled by multiplying each term with `base^p`. The result has the
    /// same zero set away from the cleared denominators' zeros.
    pub fn clear_denominators(&self) -> Expr {
        let terms: Vec<Expr> = match self.node() {
            Node::Sum(ts) => ts.clone(),
            _ => vec![self.clone()],
        };
        let mut need: BTreeMap<Expr, Rational> = BTreeMap::new();
        for t in &terms {
            let factors: Vec<Expr> = match t.node() {
                Node::Prod(fs) => fs.clone(),
                _ => vec![t.clone()],
            };
            for f in factors {
                if let Node::Pow(b, e) = f.node() {
                    if let Node::Num(q) = e.node() {
                        if q.is_negative() {
                            let p = -q.clone();
                            let cur = need.entry(b.clone()).or_insert_with(Rational::zero);
                            if p > *cur {
                                *cur = p;
                            }
                        }
                    }
                }
            }
        }
        if need.is_empty() {
            return self.clone();
        }
        // Raw powers so the per-term product merges exponents on the shared
        // base instead of expanding the multiplier first.
        let mult: Vec<Expr> = need
            .into_iter()
            .map(|(b, p)| Expr::raw(Node::Pow(b, Expr::num(p))))
            .collect();
        Expr::sum(
            terms
                .into_iter()
                .map(|t| {
                    let mut fs = Vec::with_capacity(mult.len() + 1);
                    fs.push(t);
                    fs.extend(mult.iter().cloned());
                    Expr::product(fs)
                })
                .collect(),
        )
    }
}

/// Splits a canonical non-sum, non-constant term into (rational coefficient,
/// coefficient-free core). Used for like-term collection.
fn split_coefficient(e: &Expr) -> (Rational, Expr) {
    if let Node::Prod(fs) = e.node() {
        if let Node::Num(c) = fs[0].node() {
            let rest: Vec<Expr> = fs[1..].to_vec();
            let core = if rest.len() == 1 {
                rest.into_iter().next().unwrap()
            } else {
                Expr::raw(Node::Prod(rest))
            };
            return (c.clone(), core);
        }
    }
    (Rational::one(), e.clone())
}

fn attach_coefficient(c: Rational, core: Expr) -> Expr {
    if c.is_one() {
        return core;
    }
    match core.node() {
        Node::Prod(fs) => {
            let mut out = Vec::with_capacity(fs.len() + 1);
            out.push(Expr::num(c));
            out.extend(fs.iter().cloned());
            Expr::raw(Node::Prod(out))
        }
        _ => Expr::raw(Node::Prod(vec![Expr::num(c), core])),
    }
}

/// Guard rail on exact exponentiation so canonicalization never builds
/// astronomically large integers.
const MAX_FOLD_EXP: i64 = 1024;

/// Sum bases are multiplied out up to this exponent; beyond it the power
/// node is kept, trading canonical expansion for bounded term counts.
const EXPAND_POW_MAX: i64 = 64;

/// Expands (t_1 + ... + t_m)^n for a small positive n by repeated
/// term-by-term multiplication through the canonical constructors.
fn expand_sum_power(terms: &[Expr], n: i64) -> Expr {
    let mut acc = Expr::one();
    for _ in 0..n {
        let acc_terms: Vec<Expr> = match acc.node() {
            Node::Sum(ts) => ts.clone(),
            _ => vec![acc.clone()],
        };
        let mut next = Vec::with_capacity(acc_terms.len() * terms.len());
        for a in &acc_terms {
            for t in terms {
                next.push(Expr::mul(a.clone(), t.clone()));
            }
        }
        acc = Expr::sum(next);
    }
    acc
}

/// Symbolic factors of one canonical term with their rational exponents.
/// Powers with symbolic exponents are left out: their inverses would not
/// merge back structurally.
fn term_symbolic_factors(t: &Expr) -> BTreeMap<Expr, Rational> {
    let factors: Vec<Expr> = match t.node() {
        Node::Prod(fs) => fs.clone(),
        _ => vec![t.clone()],
    };
    let mut out = BTreeMap::new();
    for f in factors {
        match f.node() {
            Node::Num(_) => {}
            Node::Pow(b, e) => {
                if let Node::Num(q) = e.node() {
                    out.insert(b.clone(), q.clone());
                }
            }
            _ => {
                out.insert(f.clone(), Rational::one());
            }
        }
    }
    out
}

/// Common symbolic factor of a sum's terms: per shared base the minimal
/// exponent across terms. Splitting it off lets a power of the sum merge
/// against matching factors instead of hiding them inside the base.
fn sum_common_factor(terms: &[Expr]) -> Option<(Expr, Expr)> {
    let mut acc = term_symbolic_factors(&terms[0]);
    for t in &terms[1..] {
        if acc.is_empty() {
            return None;
        }
        let m = term_symbolic_factors(t);
        acc = acc
            .into_iter()
            .filter_map(|(b, e)| m.get(&b).map(|e2| (b, e.min(e2.clone()))))
            .collect();
    }
    if acc.is_empty() {
        return None;
    }
    let common = Expr::product(
        acc.iter()
            .map(|(b, e)| Expr::pow(b.clone(), Expr::num(e.clone())))
            .collect(),
    );
    // Raw inverse powers so each term's product merges exponents on the
    // shared bases exactly.
    let reduced = Expr::sum(
        terms
            .iter()
            .map(|t| {
                let mut fs = Vec::with_capacity(acc.len() + 1);
                fs.push(t.clone());
                fs.extend(
                    acc.iter()
                        .map(|(b, e)| Expr::raw(Node::Pow(b.clone(), Expr::num(-e.clone())))),
                );
                Expr::product(fs)
            })
            .collect(),
    );
    Some((common, reduced))
}

/// Rational content of a canonical sum: the gcd of the term coefficients,
/// carrying the sign of the leading term so primitive parts are unique.
fn sum_content(terms: &[Expr]) -> Rational {
    let mut g = Rational::zero();
    let mut leading_negative = false;
    for (i, t) in terms.iter().enumerate() {
        let c = match t.node() {
            Node::Num(q) => q.clone(),
            _ => split_coefficient(t).0,
        };
        if i == 0 {
            leading_negative = c.is_negative();
        }
        g = rational_gcd(&g, &c);
    }
    if leading_negative {
        g = -g;
    }
    g
}

/// gcd over the rationals: gcd of numerators over lcm of denominators.
fn rational_gcd(a: &Rational, b: &Rational) -> Rational {
    if a.is_zero() {
        return b.abs();
    }
    if b.is_zero() {
        return a.abs();
    }
    let gn = big_gcd(a.numer().abs(), b.numer().abs());
    let gd = big_gcd(a.denom().clone(), b.denom().clone());
    let lcm_d = a.denom() / &gd * b.denom();
    Rational::new(gn, lcm_d)
}

fn big_gcd(mut a: BigInt, mut b: BigInt) -> BigInt {
    while !b.is_zero() {
        let r = &a % &b;
        a = std::mem::replace(&mut b, r);
    }
    a
}

fn fold_rational_pow(base: &Rational, expo: &Rational) -> Option<Rational> {
    if expo.is_integer() {
        let n = expo.to_integer().to_i64()?;
        if n.abs() > MAX_FOLD_EXP {
            return None;
        }
        return Some(rational_powi(base, n));
    }
    // Exact roots of positive rationals: q^(p/r) folds only when both the
    // numerator and denominator of q^p are perfect r-th powers.
    if !base.is_positive() {
        return None;
    }
    let p = expo.numer().to_i64()?;
    let r = expo.denom().to_i64()?;
    if p.abs() > MAX_FOLD_EXP || r > 64 {
        return None;
    }
    let powered = rational_powi(base, p);
    let rn = nth_root_exact(powered.numer(), r)?;
    let rd = nth_root_exact(powered.denom(), r)?;
    Some(Rational::new(rn, rd))
}

fn rational_powi(base: &Rational, n: i64) -> Rational {
    let mag = base.pow(n.unsigned_abs() as u32 as i32);
    if n >= 0 {
        mag
    } else {
        mag.recip()
    }
}

fn nth_root_exact(v: &BigInt, r: i64) -> Option<BigInt> {
    if v.is_negative() {
        return None;
    }
    let root = v.nth_root(r as u32);
    if root.pow(r as u32) == *v {
        Some(root)
    } else {
        None
    }
}
