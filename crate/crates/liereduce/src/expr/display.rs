//! Precedence-aware printer. Output re-parses to the same canonical tree,
//! which the round-trip tests rely on.

use super::{Expr, Node, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed};
use std::fmt;

// Precedence classes: 1 sums, 2 products and ratios and negative literals,
// 3 powers, 4 atoms.
fn prec_of(e: &Expr) -> u8 {
    match e.node() {
        Node::Sum(_) => 1,
        Node::Prod(_) => 2,
        Node::Num(q) => {
            if q.is_negative() {
                1
            } else if q.is_integer() {
                4
            } else {
                2
            }
        }
        Node::Pow(_, e) => {
            if matches!(e.node(), Node::Num(q) if q.is_negative()) {
                2
            } else {
                3
            }
        }
        Node::Var(_) | Node::Fun(_, _) => 4,
    }
}

fn fmt_prec(e: &Expr, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
    if prec_of(e) < parent {
        write!(f, "(")?;
        fmt_core(e, f)?;
        write!(f, ")")
    } else {
        fmt_core(e, f)
    }
}

/// Splits a term into its sign and magnitude for sum printing.
fn signed_parts(e: &Expr) -> (bool, Expr) {
    match e.node() {
        Node::Num(q) if q.is_negative() => (true, Expr::num(-q.clone())),
        Node::Prod(fs) => {
            if let Node::Num(c) = fs[0].node() {
                if c.is_negative() {
                    let mag = std::iter::once(Expr::num(-c.clone()))
                        .chain(fs[1..].iter().cloned())
                        .collect();
                    return (true, Expr::product(mag));
                }
            }
            (false, e.clone())
        }
        _ => (false, e.clone()),
    }
}

/// Splits an expression into numerator factors, denominator factors, and a
/// sign, so that negative-exponent powers print as divisions.
fn ratio_parts(e: &Expr) -> (bool, Vec<String>, Vec<String>) {
    let mut num: Vec<Expr> = Vec::new();
    let mut den: Vec<Expr> = Vec::new();
    let mut numer_c = BigInt::one();
    let mut denom_c = BigInt::one();
    let mut negative = false;

    let mut absorb_coeff = |q: &Rational, negative: &mut bool| {
        let mut n = q.numer().clone();
        if n.is_negative() {
            *negative = !*negative;
            n = -n;
        }
        numer_c *= n;
        denom_c *= q.denom();
    };

    let place = |factor: &Expr, num: &mut Vec<Expr>, den: &mut Vec<Expr>| {
        if let Node::Pow(b, ex) = factor.node() {
            if let Node::Num(q) = ex.node() {
                if q.is_negative() {
                    // Raw node: routing through the constructor would expand
                    // sum bases instead of just flipping the sign.
                    let flipped = -q.clone();
                    den.push(if flipped.is_one() {
                        b.clone()
                    } else {
                        Expr::raw(Node::Pow(b.clone(), Expr::num(flipped)))
                    });
                    return;
                }
            }
        }
        num.push(factor.clone());
    };

    match e.node() {
        Node::Prod(fs) => {
            for factor in fs {
                if let Node::Num(q) = factor.node() {
                    absorb_coeff(q, &mut negative);
                } else {
                    place(factor, &mut num, &mut den);
                }
            }
        }
        _ => place(e, &mut num, &mut den),
    }

    let mut num_parts: Vec<String> = Vec::new();
    if !numer_c.is_one() || num.is_empty() {
        num_parts.push(numer_c.to_string());
    }
    num_parts.extend(num.iter().map(|x| format_at(x, 3)));
    let mut den_parts: Vec<String> = Vec::new();
    if !denom_c.is_one() {
        den_parts.push(denom_c.to_string());
    }
    den_parts.extend(den.iter().map(|x| format_at(x, 3)));
    (negative, num_parts, den_parts)
}

fn format_at(e: &Expr, parent: u8) -> String {
    struct At<'a>(&'a Expr, u8);
    impl fmt::Display for At<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            fmt_prec(self.0, f, self.1)
        }
    }
    At(e, parent).to_string()
}

fn fmt_core(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.node() {
        Node::Num(q) => {
            if q.is_integer() {
                write!(f, "{}", q.numer())
            } else {
                write!(f, "{}/{}", q.numer(), q.denom())
            }
        }
        Node::Var(v) => write!(f, "{v}"),
        Node::Fun(func, a) => write!(f, "{}({})", func.name(), format_at(a, 0)),
        Node::Pow(b, ex) => {
            if matches!(ex.node(), Node::Num(q) if q.is_negative()) {
                return fmt_ratio(e, f);
            }
            fmt_prec(b, f, 4)?;
            write!(f, "^")?;
            fmt_prec(ex, f, 4)
        }
        Node::Prod(_) => fmt_ratio(e, f),
        Node::Sum(ts) => {
            for (i, t) in ts.iter().enumerate() {
                let (neg, mag) = signed_parts(t);
                if i == 0 {
                    if neg {
                        write!(f, "-")?;
                    }
                } else if neg {
                    write!(f, " - ")?;
                } else {
                    write!(f, " + ")?;
                }
                fmt_prec(&mag, f, 2)?;
            }
            Ok(())
        }
    }
}

fn fmt_ratio(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let (negative, num_parts, den_parts) = ratio_parts(e);
    if negative {
        write!(f, "-")?;
    }
    write!(f, "{}", num_parts.join("*"))?;
    if den_parts.is_empty() {
        return Ok(());
    }
    if den_parts.len() == 1 {
        write!(f, "/{}", den_parts[0])
    } else {
        write!(f, "/({})", den_parts.join("*"))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_prec(self, f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_and_rationals() {
        assert_eq!(Expr::var("x").to_string(), "x");
        assert_eq!(Expr::int(-3).to_string(), "-3");
        assert_eq!(Expr::ratio(1, 2).to_string(), "1/2");
        assert_eq!(Expr::ratio(-2, 3).to_string(), "-2/3");
    }

    #[test]
    fn sums_print_with_signs() {
        let x = Expr::var("x");
        let e = Expr::sub(Expr::ln(x.clone()), Expr::mul(Expr::int(2), x.clone()));
        assert_eq!(e.to_string(), "ln(x) - 2*x");
        let e = Expr::add(Expr::one(), Expr::ln(x));
        assert_eq!(e.to_string(), "1 + ln(x)");
    }

    #[test]
    fn negative_powers_print_as_division() {
        let x = Expr::var("x");
        let e = Expr::div(Expr::var("y"), Expr::powi(x.clone(), 2));
        assert_eq!(e.to_string(), "y/x^2");
        let e = Expr::powi(x.clone(), -1);
        assert_eq!(e.to_string(), "1/x");
        let e = Expr::div(Expr::int(1), Expr::mul(x.clone(), Expr::var("y")));
        assert_eq!(e.to_string(), "1/(x*y)");
    }

    #[test]
    fn parenthesization() {
        let x = Expr::var("x");
        let sum = Expr::add(x.clone(), Expr::one());
        // Products distribute over sums, so the expanded forms print.
        let e = Expr::mul(sum.clone(), Expr::var("y"));
        assert_eq!(e.to_string(), "y + x*y");
        let e = Expr::powi(sum.clone(), 2);
        assert_eq!(e.to_string(), "1 + x^2 + 2*x");
        let e = Expr::powi(sum.clone(), -2);
        assert_eq!(e.to_string(), "1/(1 + x)^2");
        let e = Expr::pow(sum, Expr::ratio(1, 2));
        assert_eq!(e.to_string(), "(1 + x)^(1/2)");
        let e = Expr::pow(x.clone(), Expr::ratio(1, 2));
        assert_eq!(e.to_string(), "x^(1/2)");
        let e = Expr::pow(x, Expr::neg(Expr::var("y")));
        assert_eq!(e.to_string(), "x^(-y)");
    }

    #[test]
    fn coefficient_placement() {
        let x = Expr::var("x");
        let e = Expr::product(vec![Expr::ratio(-3, 2), x.clone(), Expr::ln(x)]);
        assert_eq!(e.to_string(), "-3*x*ln(x)/2");
    }
}
