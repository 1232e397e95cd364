//! Dense exact linear algebra over arbitrary-precision rationals. Small and
//! deliberate: reduced row echelon form plus the handful of derived
//! operations the algebra layer needs (rank, span membership, nullspace,
//! inverse). Everything is deterministic, no pivThresholds, no tolerance.

use crate::expr::Rational;
use num_traits::{One, Zero};

pub type QVec = Vec<Rational>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<QVec>,
}

impl QMat {
    pub fn from_rows(data: Vec<QVec>) -> QMat {
        let rows = data.len();
        let cols = data.first().map(|r| r.len()).unwrap_or(0);
        assert!(
            data.iter().all(|r| r.len() == cols),
            "ragged matrix rows"
        );
        QMat { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> QMat {
        QMat {
            rows,
            cols,
            data: vec![vec![Rational::zero(); cols]; rows],
        }
    }

    pub fn identity(n: usize) -> QMat {
        let mut m = QMat::zeros(n, n);
        for i in 0..n {
            m.data[i][i] = Rational::one();
        }
        m
    }

    pub fn row(&self, i: usize) -> &QVec {
        &self.data[i]
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i][j] = v;
    }

    pub fn rows_vec(&self) -> &[QVec] {
        &self.data
    }

    pub fn mul(&self, rhs: &QMat) -> QMat {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matrix product");
        let mut out = QMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.data[i][k].is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let add = &self.data[i][k] * &rhs.data[k][j];
                    out.data[i][j] += add;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Rational]) -> QVec {
        assert_eq!(self.cols, v.len(), "dimension mismatch in matrix-vector product");
        self.data
            .iter()
            .map(|row| {
                let mut acc = Rational::zero();
                for (a, b) in row.iter().zip(v) {
                    if !a.is_zero() && !b.is_zero() {
                        acc += a * b;
                    }
                }
                acc
            })
            .collect()
    }

    /// In-place Gauss-Jordan. Returns the pivot columns.
    pub fn reduce(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0usize;
        for c in 0..self.cols {
            let Some(p) = (r..self.rows).find(|&i| !self.data[i][c].is_zero()) else {
                continue;
            };
            self.data.swap(r, p);
            let inv = self.data[r][c].recip();
            for j in c..self.cols {
                let v = &self.data[r][j] * &inv;
                self.data[r][j] = v;
            }
            for i in 0..self.rows {
                if i == r || self.data[i][c].is_zero() {
                    continue;
                }
                let f = self.data[i][c].clone();
                for j in c..self.cols {
                    let sub = &f * &self.data[r][j];
                    self.data[i][j] -= sub;
                }
            }
            pivots.push(c);
            r += 1;
            if r == self.rows {
                break;
            }
        }
        pivots
    }

    pub fn rref(&self) -> (QMat, Vec<usize>) {
        let mut m = self.clone();
        let p = m.reduce();
        (m, p)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the row space in reduced echelon form; canonical for the
    /// span, so equal spans produce identical bases.
    pub fn row_space_basis(&self) -> Vec<QVec> {
        let (m, pivots) = self.rref();
        m.data.into_iter().take(pivots.len()).collect()
    }

    /// Basis of the right nullspace.
    pub fn nullspace(&self) -> Vec<QVec> {
        let (m, pivots) = self.rref();
        let mut out = Vec::new();
        let piv_set: Vec<usize> = pivots.clone();
        for free in 0..self.cols {
            if piv_set.contains(&free) {
                continue;
            }
            let mut v = vec![Rational::zero(); self.cols];
            v[free] = Rational::one();
            for (ri, &pc) in piv_set.iter().enumerate() {
                v[pc] = -m.data[ri][free].clone();
            }
            out.push(v);
        }
        out
    }

    /// Unique solution of `self * x = b`, if it exists: the system must be
    /// consistent and have full column rank.
    pub fn solve_unique(&self, b: &[Rational]) -> Option<QVec> {
        assert_eq!(b.len(), self.rows, "right-hand side length mismatch");
        let mut aug = QMat::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug.data[i][j] = self.data[i][j].clone();
            }
            aug.data[i][self.cols] = b[i].clone();
        }
        let pivots = aug.reduce();
        if pivots.contains(&self.cols) {
            return None; // inconsistent
        }
        if pivots.len() < self.cols {
            return None; // underdetermined
        }
        let mut x = vec![Rational::zero(); self.cols];
        for (ri, &pc) in pivots.iter().enumerate() {
            x[pc] = aug.data[ri][self.cols].clone();
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<QMat> {
        assert_eq!(self.rows, self.cols, "inverse of a non-square matrix");
        let n = self.rows;
        let mut aug = QMat::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.data[i][j] = self.data[i][j].clone();
            }
            aug.data[i][n + i] = Rational::one();
        }
        let pivots = aug.reduce();
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &c)| c != i) {
            return None;
        }
        let mut inv = QMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv.data[i][j] = aug.data[i][n + j].clone();
            }
        }
        Some(inv)
    }
}

/// Reduces `v` against reduced-echelon basis rows; returns the remainder.
pub fn reduce_against(basis: &[QVec], v: &[Rational]) -> QVec {
    let mut rem: QVec = v.to_vec();
    for row in basis {
        let Some(lead) = row.iter().position(|x| !x.is_zero()) else {
            continue;
        };
        if rem[lead].is_zero() {
            continue;
        }
        let f = &rem[lead] / &row[lead];
        for j in 0..rem.len() {
            let sub = &f * &row[j];
            rem[j] -= sub;
        }
    }
    rem
}

/// Span-membership test against a reduced-echelon basis.
pub fn in_span(basis: &[QVec], v: &[Rational]) -> bool {
    reduce_against(basis, v).iter().all(|x| x.is_zero())
}

pub fn q(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

pub fn qr(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> QMat {
        QMat::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| q(x)).collect())
                .collect(),
        )
    }

    #[test]
    fn rref_and_rank() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[1, 1, 1]]);
        assert_eq!(a.rank(), 2);
        let (r, pivots) = a.rref();
        assert_eq!(pivots, vec![0, 1]);
        assert_eq!(r.get(0, 0), &q(1));
        assert_eq!(r.get(0, 1), &q(0));
        // Row space basis is canonical: permuted rows give the same basis.
        let b = m(&[&[1, 1, 1], &[1, 2, 3], &[2, 4, 6]]);
        assert_eq!(a.row_space_basis(), b.row_space_basis());
    }

    #[test]
    fn nullspace_annihilates() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6]]);
        let ns = a.nullspace();
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(a.mul_vec(v).iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn unique_solve() {
        let a = m(&[&[2, 1], &[1, -1], &[3, 0]]);
        // b = A * (1, 2)
        let b = vec![q(4), q(-1), q(3)];
        assert_eq!(a.solve_unique(&b), Some(vec![q(1), q(2)]));
        // Inconsistent right-hand side.
        let b = vec![q(4), q(-1), q(4)];
        assert_eq!(a.solve_unique(&b), None);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = m(&[&[2, 1, 0], &[0, 1, 1], &[1, 0, 1]]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), QMat::identity(3));
        assert_eq!(inv.mul(&a), QMat::identity(3));
        let singular = m(&[&[1, 2], &[2, 4]]);
        assert!(singular.inverse().is_none());
    }

    #[test]
    fn span_membership() {
        let basis = m(&[&[1, 0, 2], &[0, 1, -1]]).row_space_basis();
        assert!(in_span(&basis, &[q(2), q(3), q(1)]));
        assert!(!in_span(&basis, &[q(0), q(0), q(1)]));
    }
}
