//! Basis coefficients of fields, the exposure support set, and
//! confounder-to-exposure coefficient ratios.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisMatrix, BasisSpec, BasisSweep};
use crate::error::{Error, Result};
use crate::mode::{kde_mode, KernelSpec};
use crate::sample::Point;

/// Least-squares coefficients `(H^T H)^{-1} H^T v`. On a basis with
/// `H^T H / n = I` this is the vector of empirical inner products `<v, h_j>`.
pub fn project(field: &[f64], basis: &BasisMatrix) -> Result<Vec<f64>> {
    if field.len() != basis.n() {
        return Err(Error::invalid(format!(
            "field has {} values, basis has {} rows",
            field.len(),
            basis.n()
        )));
    }
    let ls = basis.factor()?;
    Ok(ls.coefficients(field).as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportKind {
    /// Keep `|a_j| > tau * max_k |a_k|`.
    Relative,
    /// Keep `|a_j| > tau`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportRule {
    pub rule: SupportKind,
    pub tau: f64,
}

impl Default for SupportRule {
    fn default() -> Self {
        SupportRule { rule: SupportKind::Relative, tau: 0.01 }
    }
}

impl SupportRule {
    pub fn relative(tau: f64) -> Self {
        SupportRule { rule: SupportKind::Relative, tau }
    }

    pub fn absolute(tau: f64) -> Self {
        SupportRule { rule: SupportKind::Absolute, tau }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::invalid(format!("support threshold must be >= 0, got {}", self.tau)));
        }
        Ok(())
    }

    /// Cutoff applied to `|a_j|`.
    pub fn threshold(&self, coefficients: &[f64]) -> f64 {
        match self.rule {
            SupportKind::Absolute => self.tau,
            SupportKind::Relative => {
                self.tau * coefficients.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
            }
        }
    }
}

/// Indices (0-based) whose coefficient magnitude exceeds the rule's cutoff.
/// An empty result is legal and must be handled by the caller.
pub fn support_set(coefficients: &[f64], rule: &SupportRule) -> Result<Vec<usize>> {
    rule.validate()?;
    let cut = rule.threshold(coefficients);
    Ok(coefficients
        .iter()
        .enumerate()
        .filter(|(_, a)| a.abs() > cut)
        .map(|(j, _)| j)
        .collect())
}

/// Coefficients of one field together with its support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpectrum {
    pub field_label: String,
    pub coefficients: Vec<f64>,
    pub support: Vec<usize>,
    pub threshold: f64,
}

impl CoefficientSpectrum {
    pub fn compute(
        field: &[f64],
        basis: &BasisMatrix,
        rule: &SupportRule,
        label: impl Into<String>,
    ) -> Result<Self> {
        let coefficients = project(field, basis)?;
        Self::from_coefficients(coefficients, rule, label)
    }

    pub fn from_coefficients(
        coefficients: Vec<f64>,
        rule: &SupportRule,
        label: impl Into<String>,
    ) -> Result<Self> {
        let support = support_set(&coefficients, rule)?;
        Ok(CoefficientSpectrum {
            field_label: label.into(),
            threshold: rule.threshold(&coefficients),
            coefficients,
            support,
        })
    }

    pub fn has_support(&self) -> bool {
        !self.support.is_empty()
    }
}

/// `r_j = a_u[j] / a_x[j]` for every `j` in the exposure support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSet {
    pub ratios: BTreeMap<usize, f64>,
}

impl RatioSet {
    pub fn values(&self) -> Vec<f64> {
        self.ratios.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub fn ratio_set(exposure: &CoefficientSpectrum, confounder: &CoefficientSpectrum) -> Result<RatioSet> {
    if exposure.coefficients.len() != confounder.coefficients.len() {
        return Err(Error::invalid("spectra were computed on different bases"));
    }
    if exposure.support.is_empty() {
        return Err(Error::NoSupport);
    }
    let ratios = exposure
        .support
        .iter()
        .map(|&j| (j, confounder.coefficients[j] / exposure.coefficients[j]))
        .collect();
    Ok(RatioSet { ratios })
}

/// One point of a ratio-mode trajectory. `abs_mode` is `None` when the ratio
/// set for this `d` could not be formed; `status` then carries the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub d: usize,
    pub abs_mode: Option<f64>,
    pub n_ratios: usize,
    pub status: String,
}

/// For each `d`, the absolute KDE mode of the ratios of `field_a`'s
/// coefficients over `field_b`'s (with `field_b` supplying the support set).
pub fn ratio_mode_trajectory(
    field_a: &[f64],
    field_b: &[f64],
    locations: &[Point],
    template: &BasisSpec,
    d_values: &[usize],
    kernel: &KernelSpec,
    rule: &SupportRule,
) -> Result<Vec<TrajectoryPoint>> {
    if d_values.is_empty() || d_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("d values must be non-empty and strictly increasing"));
    }
    if field_a.len() != locations.len() || field_b.len() != locations.len() {
        return Err(Error::invalid("fields and locations differ in length"));
    }
    kernel.validate()?;
    rule.validate()?;
    let d_max = *d_values.last().expect("non-empty");
    let sweep = BasisSweep::new(template, locations, d_max)?;

    let point = |d: usize| -> Result<(f64, usize)> {
        let basis = sweep.basis(d)?;
        let b = CoefficientSpectrum::compute(field_b, &basis, rule, "b")?;
        let a = CoefficientSpectrum::compute(field_a, &basis, rule, "a")?;
        let ratios = ratio_set(&b, &a)?;
        let mode = kde_mode(&ratios.values(), kernel)?;
        Ok((mode.beta_hat.abs(), ratios.len()))
    };

    Ok(d_values
        .par_iter()
        .map(|&d| match point(d) {
            Ok((abs_mode, n_ratios)) => TrajectoryPoint {
                d,
                abs_mode: Some(abs_mode),
                n_ratios,
                status: "ok".into(),
            },
            Err(e) => TrajectoryPoint {
                d,
                abs_mode: None,
                n_ratios: 0,
                status: format!("{}: {e}", e.kind()),
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_rule_drops_small_coefficients() {
        let s = support_set(&[0.0, 5.0, 0.001, -4.0], &SupportRule::relative(0.01)).unwrap();
        assert_eq!(s, vec![1, 3]);
    }

    #[test]
    fn zero_coefficients_have_empty_support() {
        for rule in [SupportRule::relative(0.01), SupportRule::absolute(0.0)] {
            assert!(support_set(&[0.0; 5], &rule).unwrap().is_empty());
        }
    }

    #[test]
    fn negative_threshold_is_invalid() {
        assert!(support_set(&[1.0], &SupportRule::absolute(-1.0)).is_err());
    }

    #[test]
    fn ratio_set_needs_support() {
        let x = CoefficientSpectrum::from_coefficients(vec![0.0, 0.0], &SupportRule::default(), "x").unwrap();
        let u = CoefficientSpectrum::from_coefficients(vec![1.0, 0.0], &SupportRule::default(), "u").unwrap();
        assert!(matches!(ratio_set(&x, &u), Err(Error::NoSupport)));
    }

    #[test]
    fn unconfounded_and_identical_fields() {
        let rule = SupportRule::default();
        let x = CoefficientSpectrum::from_coefficients(vec![1.0, -2.0, 0.0, 3.0], &rule, "x").unwrap();
        let zero = CoefficientSpectrum::from_coefficients(vec![0.0; 4], &rule, "u").unwrap();
        let r = ratio_set(&x, &zero).unwrap();
        assert_eq!(r.ratios.keys().copied().collect::<Vec<_>>(), vec![0, 1, 3]);
        assert!(r.values().iter().all(|&v| v == 0.0));
        let r = ratio_set(&x, &x).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.0));
    }
}
