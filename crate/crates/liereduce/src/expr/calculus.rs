//! Partial differentiation of canonical expressions.

use super::{Expr, Func, Node};

impl Expr {
    /// Partial derivative with respect to `var`. The result is canonical.
    pub fn differentiate(&self, var: &str) -> Expr {
        if !self.contains_var(var) {
            return Expr::zero();
        }
        match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Var(v) => {
                if v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Fun(f, a) => {
                let da = a.differentiate(var);
                let outer = match f {
                    Func::Exp => Expr::exp(a.clone()),
                    Func::Ln => Expr::powi(a.clone(), -1),
                    Func::Sin => Expr::cos(a.clone()),
                    Func::Cos => Expr::neg(Expr::sin(a.clone())),
                };
                Expr::mul(outer, da)
            }
            Node::Pow(b, e) => {
                if let Node::Num(r) = e.node() {
                    // d(b^r) = r * b^(r-1) * b', keeping constant exponents
                    // free of spurious logarithms.
                    let r1 = Expr::num(r - num_rational::BigRational::from_integer(1.into()));
                    return Expr::product(vec![
                        e.clone(),
                        Expr::pow(b.clone(), r1),
                        b.differentiate(var),
                    ]);
                }
                // General rule: b^e * (e' ln b + e b'/b).
                let term1 = Expr::mul(e.differentiate(var), Expr::ln(b.clone()));
                let term2 = Expr::product(vec![
                    e.clone(),
                    b.differentiate(var),
                    Expr::powi(b.clone(), -1),
                ]);
                Expr::mul(self.clone(), Expr::add(term1, term2))
            }
            Node::Prod(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for (i, fi) in fs.iter().enumerate() {
                    if !fi.contains_var(var) {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(fs.len());
                    factors.push(fi.differentiate(var));
                    for (j, fj) in fs.iter().enumerate() {
                        if i != j {
                            factors.push(fj.clone());
                        }
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.differentiate(var)).collect()),
        }
    }
}
