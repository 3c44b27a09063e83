//! The constant `c*`: the smallest `h_j^2`-weighted Rayleigh quotient over the
//! span of the remaining basis functions, minimized over `j`.
//!
//! For each `j`, take an orthonormal basis `{phi_k}` (under the weighted
//! empirical measure) of `V_j = span{h_k : k != j}` and form
//! `G_kl = sum_i w_i h_j(S_i)^2 phi_k(S_i) phi_l(S_i)`. Then
//! `inf_{v in V_j, ||v|| = 1} Q_j(v)` is the smallest eigenvalue of `G`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::BasisMatrix;
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;

/// Relative eigenvalue tolerance; smaller eigenvalues are reported as 0.
pub const EIGEN_TOL: f64 = 1e-10;

/// `c*` under the uniform empirical measure.
pub fn c_star(basis: &BasisMatrix) -> Result<f64> {
    c_star_weighted(basis, &vec![1.0; basis.n()])
}

/// `c*` under the empirical measure with (unnormalized) location weights.
pub fn c_star_weighted(basis: &BasisMatrix, weights: &[f64]) -> Result<f64> {
    let (n, d) = basis.values().shape();
    if d < 2 {
        return Err(Error::invalid("c* needs at least two basis functions"));
    }
    if weights.len() != n {
        return Err(Error::invalid("weight vector length does not match locations"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    let root_w: Vec<f64> = weights.iter().map(|w| (w / total).sqrt()).collect();

    let mut best = f64::INFINITY;
    for j in 0..d {
        let others: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        // Rows scaled by sqrt(w): Q has orthonormal columns, and
        // phi = diag(1/sqrt(w)) Q is orthonormal under the weighted measure.
        let scaled = DMatrix::from_fn(n, d - 1, |i, c| root_w[i] * basis.values()[(i, others[c])]);
        let ls = LeastSquares::factor(&scaled, &format!("c*: span of columns other than {j}"))?;
        let hj = basis.column(j);
        let q = ls.q();
        let mut weighted = q.clone();
        for i in 0..n {
            let h2 = hj[i] * hj[i];
            weighted.row_mut(i).scale_mut(h2);
        }
        let g = q.tr_mul(&weighted);
        let g = (&g + g.transpose()) * 0.5;
        let eig = SymmetricEigen::new(g);
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.amax();
        let value = if min < EIGEN_TOL * max.max(f64::MIN_POSITIVE) { 0.0 } else { min };
        best = best.min(value);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{build_basis, generate_locations, BasisSpec, LocationDesign};

    #[test]
    fn fewer_than_two_columns_is_invalid() {
        let locs = generate_locations(LocationDesign::Grid, 16, 0).unwrap();
        let b = build_basis(&BasisSpec::fourier(1), &locs).unwrap();
        assert!(matches!(c_star(&b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn uniform_rescaling_of_weights_leaves_value_unchanged() {
        let locs = generate_locations(LocationDesign::Grid, 100, 0).unwrap();
        let b = build_basis(&BasisSpec::fourier(5), &locs).unwrap();
        let a = c_star(&b).unwrap();
        let c = c_star_weighted(&b, &vec![7.5; 100]).unwrap();
        assert!((a - c).abs() < 1e-12);
        assert!(a >= 0.0);
    }
}
