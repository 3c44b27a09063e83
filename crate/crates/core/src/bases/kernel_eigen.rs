//! Eigenvectors of a Matérn covariance Gram matrix over the sample locations.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternParams {
    /// Smoothness. Must be a half-integer (0.5, 1.5, 2.5, ...).
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_range")]
    pub range: f64,
    #[serde(default = "default_variance")]
    pub variance: f64,
}

fn default_nu() -> f64 {
    1.5
}
fn default_range() -> f64 {
    0.25
}
fn default_variance() -> f64 {
    1.0
}

impl Default for MaternParams {
    fn default() -> Self {
        MaternParams {
            nu: default_nu(),
            range: default_range(),
            variance: default_variance(),
        }
    }
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.range > 0.0 && self.variance > 0.0 && self.nu > 0.0)
            || !self.range.is_finite()
            || !self.variance.is_finite()
        {
            return Err(Error::invalid("Matérn parameters must be finite and positive"));
        }
        self.half_integer_order()?;
        Ok(())
    }

    fn half_integer_order(&self) -> Result<u32> {
        let p = self.nu - 0.5;
        if p < 0.0 || (p - p.round()).abs() > 1e-12 || p > 20.0 {
            return Err(Error::invalid(format!(
                "Matérn smoothness {} is not a supported half-integer",
                self.nu
            )));
        }
        Ok(p.round() as u32)
    }

    /// Covariance at distance `r`, closed form for `nu = p + 1/2`.
    pub fn covariance(&self, r: f64) -> f64 {
        let p = self.half_integer_order().expect("validated smoothness");
        let z = (2.0 * self.nu).sqrt() * r / self.range;
        // Gamma(p+1)/Gamma(2p+1) * sum_i (p+i)! / (i! (p-i)!) (2z)^(p-i)
        let fact = |k: u32| (1..=k).fold(1.0, |acc, v| acc * f64::from(v));
        let lead = fact(p) / fact(2 * p);
        let poly: f64 = (0..=p)
            .map(|i| fact(p + i) / (fact(i) * fact(p - i)) * (2.0 * z).powi((p - i) as i32))
            .sum();
        self.variance * (-z).exp() * lead * poly
    }
}

/// Full eigendecomposition, eigenvalues in decreasing order. Column `j` of
/// `vectors` has Euclidean norm `sqrt(n)` and its largest-magnitude entry
/// positive.
#[derive(Debug, Clone)]
pub struct MaternEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn decompose(locations: &[Point], params: &MaternParams) -> Result<MaternEigen> {
    params.validate()?;
    let n = locations.len();
    let gram = DMatrix::from_fn(n, n, |i, k| params.covariance(locations[i].distance(&locations[k])));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let scale = (n as f64).sqrt();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().copied().fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -scale } else { scale };
        vectors.set_column(dst, &(col * sign));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(MaternEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_three_halves_closed_forms() {
        let half = MaternParams { nu: 0.5, range: 0.3, variance: 2.0 };
        let r: f64 = 0.17;
        assert!((half.covariance(r) - 2.0 * (-r / 0.3).exp()).abs() < 1e-14);

        let m = MaternParams::default();
        let z = 3f64.sqrt() * r / 0.25;
        assert!((m.covariance(r) - (1.0 + z) * (-z).exp()).abs() < 1e-14);
        assert!((m.covariance(0.0) - 1.0).abs() < 1e-14);

        let five = MaternParams { nu: 2.5, range: 0.25, variance: 1.0 };
        let z = 5f64.sqrt() * r / 0.25;
        let expect = (1.0 + z + z * z / 3.0) * (-z).exp();
        assert!((five.covariance(r) - expect).abs() < 1e-14);
    }

    #[test]
    fn non_half_integer_smoothness_is_rejected() {
        let m = MaternParams { nu: 1.0, ..MaternParams::default() };
        assert!(matches!(m.validate(), Err(Error::InvalidArgument(_))));
    }
}
