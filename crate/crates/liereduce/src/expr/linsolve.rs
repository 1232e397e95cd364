//! Gaussian elimination over the expression field.
//!
//! Pivots are selected by probabilistic non-vanishing tests, so a pivot that
//! is zero as a function is never divided by. Solutions are verified by
//! substituting back into the original system before they are returned.

use super::equality::{is_zero_probabilistic, EqualityConfig, Verdict};
use super::Expr;
use crate::error::{Error, Result};

pub fn solve_linear_symbolic(
    matrix: &[Vec<Expr>],
    rhs: &[Expr],
    cfg: &EqualityConfig,
) -> Result<Vec<Expr>> {
    let n = matrix.len();
    if rhs.len() != n {
        return Err(Error::Shape(format!(
            "matrix has {n} rows but right-hand side has {} entries",
            rhs.len()
        )));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
    }

    // Augmented working copy [A | b].
    let mut m: Vec<Vec<Expr>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();

    for col in 0..n {
        let mut pivot_row = None;
        for r in col..n {
            if m[r][col].is_zero() {
                continue;
            }
            if is_zero_probabilistic(&m[r][col], cfg)?.is_equal() {
                continue;
            }
            pivot_row = Some(r);
            break;
        }
        let Some(pr) = pivot_row else {
            return Err(Error::SingularPivot { column: col });
        };
        m.swap(col, pr);
        let pivot = m[col][col].clone();
        let pivot_inv = Expr::powi(pivot, -1);
        for r in col + 1..n {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = Expr::mul(m[r][col].clone(), pivot_inv.clone());
            for c in col..=n {
                let scaled = Expr::mul(factor.clone(), m[col][c].clone());
                m[r][c] = Expr::sub(m[r][c].clone(), scaled);
            }
            m[r][col] = Expr::zero();
        }
    }

    let mut solution = vec![Expr::zero(); n];
    for i in (0..n).rev() {
        let mut acc = m[i][n].clone();
        for j in i + 1..n {
            acc = Expr::sub(acc, Expr::mul(m[i][j].clone(), solution[j].clone()));
        }
        solution[i] = Expr::div(acc, m[i][i].clone());
    }

    for (i, row) in matrix.iter().enumerate() {
        let mut residual = Expr::neg(rhs[i].clone());
        for (j, a) in row.iter().enumerate() {
            residual = Expr::add(residual, Expr::mul(a.clone(), solution[j].clone()));
        }
        match is_zero_probabilistic(&residual, cfg)? {
            Verdict::Equal => {}
            Verdict::Unequal(_) => {
                return Err(Error::SolveVerification {
                    row: i,
                    residual: residual.to_string(),
                })
            }
        }
    }

    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EqualityConfig {
        EqualityConfig::default()
    }

    #[test]
    fn identity_system() {
        let x = Expr::var("x");
        let m = vec![
            vec![Expr::one(), Expr::zero()],
            vec![Expr::zero(), Expr::one()],
        ];
        let rhs = vec![x.clone(), Expr::int(3)];
        let sol = solve_linear_symbolic(&m, &rhs, &cfg()).unwrap();
        assert_eq!(sol[0], x);
        assert_eq!(sol[1], Expr::int(3));
    }

    #[test]
    fn triangular_symbolic_system() {
        // [[1, 1], [0, x]] (u, v) = (a, x*b)  =>  u = a - b, v = b
        let (x, a, b) = (Expr::var("x"), Expr::var("a"), Expr::var("b"));
        let m = vec![
            vec![Expr::one(), Expr::one()],
            vec![Expr::zero(), x.clone()],
        ];
        let rhs = vec![a.clone(), Expr::mul(x, b.clone())];
        let sol = solve_linear_symbolic(&m, &rhs, &cfg()).unwrap();
        let v = crate::expr::equals_probabilistic(&sol[0], &Expr::sub(a, b.clone()), &cfg())
            .unwrap();
        assert!(v.is_equal());
        let v = crate::expr::equals_probabilistic(&sol[1], &b, &cfg()).unwrap();
        assert!(v.is_equal());
    }

    #[test]
    fn pivoting_skips_vanishing_entry() {
        // First candidate pivot is x - x = 0 only after sampling would
        // reveal it; the structural zero is already canonical here, so use a
        // disguised zero: ln(exp(x)) - x.
        let hidden_zero = Expr::sub(Expr::ln(Expr::exp(Expr::var("x"))), Expr::var("x"));
        assert!(hidden_zero.is_zero());
        let m = vec![
            vec![hidden_zero, Expr::one()],
            vec![Expr::one(), Expr::zero()],
        ];
        let rhs = vec![Expr::int(5), Expr::int(7)];
        let sol = solve_linear_symbolic(&m, &rhs, &cfg()).unwrap();
        assert_eq!(sol[0], Expr::int(7));
        assert_eq!(sol[1], Expr::int(5));
    }

    #[test]
    fn sampled_zero_pivot_is_skipped() {
        // sin(x)^2 + cos(x)^2 - 1 is zero as a function but not structurally.
        let trig_zero = Expr::sub(
            Expr::add(
                Expr::powi(Expr::sin(Expr::var("x")), 2),
                Expr::powi(Expr::cos(Expr::var("x")), 2),
            ),
            Expr::one(),
        );
        assert!(!trig_zero.is_zero());
        let m = vec![
            vec![trig_zero.clone(), Expr::one()],
            vec![Expr::one(), Expr::one()],
        ];
        let rhs = vec![Expr::int(2), Expr::int(3)];
        let sol = solve_linear_symbolic(&m, &rhs, &cfg()).unwrap();
        let v = crate::expr::equals_probabilistic(&sol[0], &Expr::int(1), &cfg()).unwrap();
        assert!(v.is_equal());
        let v = crate::expr::equals_probabilistic(&sol[1], &Expr::int(2), &cfg()).unwrap();
        assert!(v.is_equal());
    }

    #[test]
    fn singular_system_names_column() {
        let m = vec![
            vec![Expr::one(), Expr::one()],
            vec![Expr::one(), Expr::one()],
        ];
        let rhs = vec![Expr::int(1), Expr::int(2)];
        match solve_linear_symbolic(&m, &rhs, &cfg()) {
            Err(Error::SingularPivot { column }) => assert_eq!(column, 1),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = vec![vec![Expr::one()]];
        let rhs = vec![Expr::one(), Expr::one()];
        assert!(matches!(
            solve_linear_symbolic(&m, &rhs, &cfg()),
            Err(Error::Shape(_))
        ));
    }
}
