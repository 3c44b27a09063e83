//! Dense least-squares helpers shared by the basis, candidate and baseline code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on `|R_kk| / ||a_k||` below which a column is treated
/// as linearly dependent on the columns before it.
pub const RANK_TOL: f64 = 1e-10;

/// Thin Householder QR of a tall matrix `A = Q R` with `diag(R) >= 0`.
///
/// Column order is preserved, so the first `k` columns of `Q` span the same
/// space as the first `k` columns of `A`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    /// Factor `a`. On rank deficiency returns the 0-based index of the first
    /// column that lies (numerically) in the span of its predecessors.
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> std::result::Result<Self, usize> {
        let (n, k) = a.shape();
        if k == 0 {
            return Ok(LeastSquares {
                q: DMatrix::zeros(n, 0),
                r: DMatrix::zeros(0, 0),
            });
        }
        if n < k {
            return Err(n);
        }
        let qr = a.clone().qr();
        let mut q = qr.q();
        let mut r = qr.r();
        for col in 0..k {
            let norm = a.column(col).norm();
            if r[(col, col)] < 0.0 {
                r.row_mut(col).neg_mut();
                q.column_mut(col).neg_mut();
            }
            if norm == 0.0 || r[(col, col)] <= rel_tol * norm {
                return Err(col);
            }
        }
        Ok(LeastSquares { q, r })
    }

    /// Like [`LeastSquares::new`] but maps rank deficiency into an [`Error`].
    pub fn factor(a: &DMatrix<f64>, context: &str) -> Result<Self> {
        LeastSquares::new(a, RANK_TOL).map_err(|column| Error::RankDeficient {
            column,
            context: context.to_string(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.q.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `Q^T v`.
    pub fn rotate(&self, v: &[f64]) -> DVector<f64> {
        self.q.tr_mul(&DVector::from_column_slice(v))
    }

    /// Least-squares coefficients `(A^T A)^{-1} A^T v`.
    pub fn coefficients(&self, v: &[f64]) -> DVector<f64> {
        let qtv = self.rotate(v);
        self.solve_r(qtv)
    }

    pub(crate) fn solve_r(&self, rhs: DVector<f64>) -> DVector<f64> {
        if self.ncols() == 0 {
            return rhs;
        }
        self.r
            .solve_upper_triangular(&rhs)
            .expect("R has a strictly positive diagonal")
    }

    /// Orthogonal projection `P v` onto the column space.
    pub fn fitted(&self, v: &[f64]) -> DVector<f64> {
        &self.q * self.rotate(v)
    }

    /// `(I - P) v`.
    pub fn residual(&self, v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v) - self.fitted(v)
    }

    /// Dual columns `G = Q R^{-T} = A (A^T A)^{-1}`, so that the coefficient
    /// of column `j` in the regression of `v` is `g_j^T v`. Each `g_j` is the
    /// residual of column `j` on the other columns, divided by its squared norm.
    pub fn dual(&self) -> DMatrix<f64> {
        let qt = self.q.transpose();
        self.r
            .solve_upper_triangular(&qt)
            .expect("R has a strictly positive diagonal")
            .transpose()
    }

    /// `sqrt([(A^T A)^{-1}]_jj)` for every column: the Euclidean norms of the
    /// rows of `R^{-1}`. The reciprocal is the norm of the residual of column
    /// `j` regressed on all other columns.
    pub fn inverse_row_norms(&self) -> Vec<f64> {
        let k = self.ncols();
        let r_inv = self
            .r
            .clone()
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("R has a strictly positive diagonal");
        (0..k).map(|j| r_inv.row(j).norm()).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_reconstructs_and_has_positive_diagonal() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0, 0.0, 1.0]);
        let ls = LeastSquares::factor(&a, "test").unwrap();
        let back = ls.q() * ls.r();
        assert!((back - &a).abs().max() < 1e-12);
        assert!(ls.r()[(0, 0)] > 0.0 && ls.r()[(1, 1)] > 0.0);
    }

    #[test]
    fn dependent_column_is_named() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0, 1.0, 2.0, 0.0]);
        match LeastSquares::factor(&a, "x") {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn inverse_row_norms_match_explicit_inverse() {
        let a = DMatrix::from_row_slice(5, 3, &[
            1.0, 0.2, 3.0, 0.5, -1.0, 2.0, 2.0, 1.0, 0.0, -1.0, 0.3, 1.0, 0.7, 2.0, -0.5,
        ]);
        let ls = LeastSquares::factor(&a, "x").unwrap();
        let inv = (a.transpose() * &a).try_inverse().unwrap();
        for (j, v) in ls.inverse_row_norms().iter().enumerate() {
            assert!((v * v - inv[(j, j)]).abs() < 1e-12);
        }
    }
}
