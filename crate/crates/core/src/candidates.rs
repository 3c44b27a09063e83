//! Per-basis-function effect estimates: projection and drop-one candidates,
//! their plug-in asymptotic variances, and covariate partial-out.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bases::BasisMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, LeastSquares, RANK_TOL};
use crate::sample::SpatialSample;

/// Relative guard on candidate denominators.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Share of U-proxy energy outside the basis span below which the proxy is
/// treated as fully spanned.
pub const SPAN_ENERGY_CUTOFF: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMethod {
    /// `h_j^T Y / h_j^T X`.
    Projection,
    /// `b_j / a_j` from the full regressions of `Y` and `X` on the basis.
    DropOne,
}

impl CandidateMethod {
    pub fn label(self) -> &'static str {
        match self {
            CandidateMethod::Projection => "projection",
            CandidateMethod::DropOne => "drop-one",
        }
    }
}

impl std::fmt::Display for CandidateMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEstimate {
    pub j: usize,
    pub estimate: f64,
    pub method: CandidateMethod,
    /// Plug-in asymptotic variance of `sqrt(n) (estimate - limit)`.
    pub avar: f64,
    /// Exposure coefficient of the unit-norm (`||h||_n = 1`) version of `h_j`.
    pub alpha_x_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub j: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub method: CandidateMethod,
    pub candidates: Vec<CandidateEstimate>,
    pub skipped: Vec<SkippedCandidate>,
    pub basis_fingerprint: String,
    pub d: usize,
    pub support: Vec<usize>,
}

impl CandidateSet {
    pub fn estimates(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.estimate).collect()
    }

    pub fn get(&self, j: usize) -> Option<&CandidateEstimate> {
        self.candidates.iter().find(|c| c.j == j)
    }
}

/// Where the confounder enters the variance plug-ins.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum AvarSource {
    /// Residual-based surrogate for the unobserved confounder.
    #[default]
    Proxy,
    /// The true confounder field and noise variance (simulation only).
    Truth { confounder: Vec<f64>, sigma_eps2: f64 },
}

impl AvarSource {
    fn validate(&self, n: usize) -> Result<()> {
        if let AvarSource::Truth { confounder, sigma_eps2 } = self {
            if confounder.len() != n {
                return Err(Error::invalid("confounder length does not match sample"));
            }
            if !(sigma_eps2.is_finite() && *sigma_eps2 >= 0.0) {
                return Err(Error::invalid("noise variance must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Residualize exposure and outcome on `[1, covariates]`.
pub fn partial_out(sample: &SpatialSample) -> Result<SpatialSample> {
    let z = sample
        .covariates()
        .ok_or_else(|| Error::invalid("sample has no covariates to partial out"))?;
    let (n, p) = z.shape();
    if n <= p + 1 {
        return Err(Error::invalid(format!("need n > p + 1 to partial out, got n = {n}, p = {p}")));
    }
    let design = DMatrix::from_fn(n, p + 1, |i, c| if c == 0 { 1.0 } else { z[(i, c - 1)] });
    let ls = LeastSquares::new(&design, RANK_TOL).map_err(|column| Error::RankDeficient {
        column,
        context: if column == 0 {
            "intercept".to_string()
        } else {
            format!(
                "covariate {} is collinear with the intercept and earlier covariates",
                sample.covariate_names()[column - 1]
            )
        },
    })?;
    let x = ls.residual(sample.exposure());
    let y = ls.residual(sample.outcome());
    sample.with_fields(x.as_slice().to_vec(), y.as_slice().to_vec())
}

fn check_inputs(sample: &SpatialSample, basis: &BasisMatrix, support: &[usize]) -> Result<()> {
    if basis.n() != sample.len() {
        return Err(Error::invalid(format!(
            "basis has {} rows, sample has {} locations",
            basis.n(),
            sample.len()
        )));
    }
    if support.is_empty() {
        return Err(Error::NoSupport);
    }
    if let Some(&j) = support.iter().find(|&&j| j >= basis.d()) {
        return Err(Error::invalid(format!("support index {j} exceeds basis size {}", basis.d())));
    }
    Ok(())
}

fn finish(
    method: CandidateMethod,
    candidates: Vec<CandidateEstimate>,
    skipped: Vec<SkippedCandidate>,
    basis: &BasisMatrix,
    support: &[usize],
) -> Result<CandidateSet> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates { skipped: skipped.len() });
    }
    Ok(CandidateSet {
        method,
        candidates,
        skipped,
        basis_fingerprint: basis.fingerprint(),
        d: basis.d(),
        support: support.to_vec(),
    })
}

/// `(1/n) sum_i w_i^2 v_i^2`: weighted second moment.
fn weighted_moment(w: &[f64], v: impl Iterator<Item = f64>) -> f64 {
    let n = w.len() as f64;
    w.iter().zip(v).map(|(a, b)| a * a * b * b).sum::<f64>() / n
}

pub fn projection_candidates(
    sample: &SpatialSample,
    basis: &BasisMatrix,
    support: &[usize],
) -> Result<CandidateSet> {
    projection_candidates_with(sample, basis, support, &AvarSource::Proxy)
}

/// Projection candidates with an explicit variance source.
///
/// Writing `h` for `h_j / ||h_j||_n`, `a = <h, X>_n` and `r` for the
/// candidate's bias, the variance is `(E[h^2 (U - r X)^2] + s2) / a^2`.
/// The proxy replaces `U - r X + eps` by `Y - estimate * X`.
pub fn projection_candidates_with(
    sample: &SpatialSample,
    basis: &BasisMatrix,
    support: &[usize],
    source: &AvarSource,
) -> Result<CandidateSet> {
    check_inputs(sample, basis, support)?;
    source.validate(sample.len())?;
    let n = sample.len() as f64;
    let x = sample.exposure();
    let y = sample.outcome();
    let x_norm = norm(x);
    let mut candidates = Vec::with_capacity(support.len());
    let mut skipped = Vec::new();
    for &j in support {
        let h = basis.column(j);
        let h_norm = norm(h);
        let hx = dot(h, x);
        if h_norm == 0.0 || hx.abs() <= DENOMINATOR_GUARD * h_norm * x_norm {
            skipped.push(SkippedCandidate { j, reason: format!("|h_j^T X| = {hx:.3e} below guard") });
            continue;
        }
        let estimate = dot(h, y) / hx;
        let scale = h_norm / n.sqrt();
        let unit: Vec<f64> = h.iter().map(|v| v / scale).collect();
        let alpha = hx / n / scale;
        let numerator = match source {
            AvarSource::Proxy => {
                weighted_moment(&unit, y.iter().zip(x).map(|(yi, xi)| yi - estimate * xi))
            }
            AvarSource::Truth { confounder, sigma_eps2 } => {
                let r = dot(&unit, confounder) / n / alpha;
                weighted_moment(&unit, confounder.iter().zip(x).map(|(u, xi)| u - r * xi))
                    + sigma_eps2 * weighted_moment(&unit, std::iter::repeat(1.0))
            }
        };
        candidates.push(CandidateEstimate {
            j,
            estimate,
            method: CandidateMethod::Projection,
            avar: numerator / (alpha * alpha),
            alpha_x_hat: alpha,
        });
    }
    finish(CandidateMethod::Projection, candidates, skipped, basis, support)
}

pub fn drop_one_candidates(
    sample: &SpatialSample,
    basis: &BasisMatrix,
    support: &[usize],
) -> Result<CandidateSet> {
    drop_one_candidates_with(sample, basis, support, &AvarSource::Proxy)
}

/// Drop-one candidates `b_j / a_j` with `a`, `b` the coefficients of `X`, `Y`
/// on the full basis, from one shared factorization.
///
/// With `g_j` the dual column (`b_j = g_j^T Y`), the variance is
/// `n sum_i g_ji^2 ((1 - lambda) U_out,i^2 + s2) / (g_j^T X)^2`, where
/// `U_out` is the confounder's component outside the basis span and
/// `lambda = 1` when that component carries under 1% of the energy. On an
/// orthonormal basis `g_j = h_j / n` and this is
/// `((1 - lambda) E[h_j^2 U_out^2] + s2) / alpha_j^2`.
pub fn drop_one_candidates_with(
    sample: &SpatialSample,
    basis: &BasisMatrix,
    support: &[usize],
    source: &AvarSource,
) -> Result<CandidateSet> {
    check_inputs(sample, basis, support)?;
    source.validate(sample.len())?;
    let nn = sample.len();
    let n = nn as f64;
    let d = basis.d();
    let ls = basis.factor()?;
    let dual = basis.dual()?;
    let x = sample.exposure();
    let y = sample.outcome();
    let a = ls.coefficients(x);
    let b = ls.coefficients(y);
    let x_norm = norm(x);

    let x_out = ls.residual(x);
    let x_in_span = x_out.norm_squared() <= 1e-20 * x_norm * x_norm;
    let dof = nn as isize - d as isize - if x_in_span { 0 } else { 1 };
    // Noise variance from the residuals of Y on the basis (and X when X has a
    // component outside the span).
    let y_out = ls.residual(y);
    let sigma_eps2_hat = if dof <= 0 {
        0.0
    } else if x_in_span {
        y_out.norm_squared() / dof as f64
    } else {
        let coef = y_out.dot(&x_out) / x_out.norm_squared();
        (&y_out - &x_out * coef).norm_squared() / dof as f64
    };
    let truth_out = match source {
        AvarSource::Truth { confounder, .. } => {
            let out = ls.residual(confounder);
            let total = norm(confounder).powi(2);
            let spanned = out.norm_squared() < SPAN_ENERGY_CUTOFF * total || total == 0.0;
            Some((out, spanned))
        }
        AvarSource::Proxy => None,
    };
    let inflate = if nn > d { n / (n - d as f64) } else { 0.0 };

    let mut candidates = Vec::with_capacity(support.len());
    let mut skipped = Vec::new();
    for &j in support {
        let g = dual.column(j);
        let g = g.as_slice();
        let g_norm = norm(g);
        let gx = a[j];
        if g_norm == 0.0 || gx.abs() <= DENOMINATOR_GUARD * x_norm * g_norm {
            skipped.push(SkippedCandidate { j, reason: format!("|a_j| = {gx:.3e} below guard") });
            continue;
        }
        let estimate = b[j] / gx;
        let second = |v: &mut dyn Iterator<Item = f64>| -> f64 {
            n * g.iter().zip(v).map(|(gi, vi)| gi * gi * vi * vi).sum::<f64>()
        };
        let g2 = g_norm * g_norm * n;
        let numerator = match (source, &truth_out) {
            (AvarSource::Truth { sigma_eps2, .. }, Some((out, spanned))) => {
                let outside = if *spanned { 0.0 } else { second(&mut out.iter().copied()) };
                outside + sigma_eps2 * g2
            }
            _ => {
                // U-proxy Y - estimate X and its part outside the span.
                let total: f64 = y.iter().zip(x).map(|(yi, xi)| (yi - estimate * xi).powi(2)).sum();
                let out: Vec<f64> = y_out.iter().zip(x_out.iter()).map(|(a, b)| a - estimate * b).collect();
                let spanned = norm(&out).powi(2) < SPAN_ENERGY_CUTOFF * total;
                if spanned {
                    sigma_eps2_hat * g2
                } else {
                    inflate * second(&mut out.iter().copied())
                }
            }
        };
        let h_norm_n = norm(basis.column(j)) / n.sqrt();
        candidates.push(CandidateEstimate {
            j,
            estimate,
            method: CandidateMethod::DropOne,
            avar: numerator / (gx * gx),
            alpha_x_hat: gx * h_norm_n,
        });
    }
    finish(CandidateMethod::DropOne, candidates, skipped, basis, support)
}

/// Candidates by method.
pub fn candidates_with(
    method: CandidateMethod,
    sample: &SpatialSample,
    basis: &BasisMatrix,
    support: &[usize],
    source: &AvarSource,
) -> Result<CandidateSet> {
    match method {
        CandidateMethod::Projection => projection_candidates_with(sample, basis, support, source),
        CandidateMethod::DropOne => drop_one_candidates_with(sample, basis, support, source),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvarComparison {
    pub j: usize,
    pub avar_projection: f64,
    pub avar_drop_one: f64,
    /// `avar_projection - avar_drop_one`.
    pub gap: f64,
    pub drop_one_not_larger: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvarReport {
    pub rows: Vec<AvarComparison>,
    /// Share of indices with `avar_drop_one <= avar_projection`.
    pub fraction: f64,
}

/// Index-by-index comparison of plug-in variances.
pub fn avar_compare(projection: &CandidateSet, drop_one: &CandidateSet) -> Result<AvarReport> {
    if projection.method != CandidateMethod::Projection || drop_one.method != CandidateMethod::DropOne {
        return Err(Error::invalid("expected a projection set and a drop-one set"));
    }
    if projection.support != drop_one.support {
        return Err(Error::invalid("candidate sets were built on different supports"));
    }
    let rows: Vec<AvarComparison> = projection
        .candidates
        .iter()
        .filter_map(|p| {
            drop_one.get(p.j).map(|q| AvarComparison {
                j: p.j,
                avar_projection: p.avar,
                avar_drop_one: q.avar,
                gap: p.avar - q.avar,
                drop_one_not_larger: q.avar <= p.avar,
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::NoCandidates { skipped: projection.skipped.len() + drop_one.skipped.len() });
    }
    let fraction = rows.iter().filter(|r| r.drop_one_not_larger).count() as f64 / rows.len() as f64;
    Ok(AvarReport { rows, fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{build_basis, generate_locations, BasisSpec, LocationDesign};
    use crate::sample::Point;

    fn sample(x: Vec<f64>, y: Vec<f64>) -> SpatialSample {
        let n = x.len();
        let locs = (0..n).map(|i| Point::new(i as f64 / n as f64, 0.5)).collect();
        SpatialSample::new(locs, x, y).unwrap()
    }

    #[test]
    fn hand_projection_case() {
        let s = sample(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]);
        let basis = BasisMatrix::from_values(DMatrix::from_element(3, 1, 1.0), "ones").unwrap();
        let c = projection_candidates(&s, &basis, &[0]).unwrap();
        assert_eq!(c.candidates[0].estimate, 2.0);
    }

    #[test]
    fn noiseless_unconfounded_candidates_equal_beta() {
        let locs = generate_locations(LocationDesign::Grid, 100, 0).unwrap();
        let basis = build_basis(&BasisSpec::fourier(9), &locs).unwrap();
        let x: Vec<f64> = (0..100).map(|i| basis.column(1)[i] * 4.0 - basis.column(5)[i] * 3.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let s = SpatialSample::new(locs, x, y).unwrap();
        for set in [
            projection_candidates(&s, &basis, &[1, 5]).unwrap(),
            drop_one_candidates(&s, &basis, &[1, 5]).unwrap(),
        ] {
            for c in &set.candidates {
                assert!((c.estimate - 2.5).abs() < 1e-12, "{c:?}");
            }
        }
    }

    #[test]
    fn zero_exposure_coefficient_is_skipped_not_dropped() {
        let s = sample(vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 2.0, 3.0, 4.0]);
        let basis = BasisMatrix::from_values(
            DMatrix::from_column_slice(4, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0]),
            "pair",
        )
        .unwrap();
        let c = projection_candidates(&s, &basis, &[0, 1]).unwrap();
        assert_eq!(c.candidates.len(), 1);
        assert_eq!(c.skipped.len(), 1);
        assert_eq!(c.skipped[0].j, 0);
        let only_zero = projection_candidates(&s, &basis, &[0]);
        assert!(matches!(only_zero, Err(Error::NoCandidates { skipped: 1 })));
    }

    #[test]
    fn intercept_only_partial_out_centers() {
        let s = sample(vec![1.0, 2.0, 6.0], vec![0.0, 3.0, 9.0])
            .with_covariates(DMatrix::zeros(3, 0), vec![])
            .unwrap();
        let p = partial_out(&s).unwrap();
        assert!(p.exposure().iter().sum::<f64>().abs() < 1e-12);
        assert!((p.exposure()[0] + 2.0).abs() < 1e-12);
        assert!(p.outcome().iter().sum::<f64>().abs() < 1e-12);
        assert!(p.covariates().is_none());
    }

    #[test]
    fn collinear_covariates_name_the_column() {
        let z = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 3.0, 4.0, 2.0, 4.0, 6.0, 8.0]);
        let s = sample(vec![1.0, 0.0, 2.0, 1.0], vec![1.0, 2.0, 0.0, 1.0])
            .with_covariates(z, vec!["a".into(), "b".into()])
            .unwrap();
        match partial_out(&s) {
            Err(Error::RankDeficient { column: 2, context }) => assert!(context.contains("covariate b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn without_confounding_the_variances_coincide() {
        let locs = generate_locations(LocationDesign::Grid, 144, 0).unwrap();
        let basis = build_basis(&BasisSpec::fourier(13), &locs).unwrap();
        let x: Vec<f64> = (0..144).map(|i| 3.0 * basis.column(2)[i] + 4.0 * basis.column(7)[i]).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let s = SpatialSample::new(locs, x, y).unwrap();
        let truth = AvarSource::Truth { confounder: vec![0.0; 144], sigma_eps2: 0.01 };
        let p = projection_candidates_with(&s, &basis, &[2, 7], &truth).unwrap();
        let q = drop_one_candidates_with(&s, &basis, &[2, 7], &truth).unwrap();
        let report = avar_compare(&p, &q).unwrap();
        for row in &report.rows {
            assert!(row.gap.abs() < 1e-10, "{row:?}");
        }
        assert!((p.get(2).unwrap().avar - 0.01 / 9.0).abs() < 1e-10);
    }

    #[test]
    fn mismatched_supports_are_rejected() {
        let s = sample(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]);
        let basis = BasisMatrix::from_values(
            DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]),
            "lin",
        )
        .unwrap();
        let p = projection_candidates(&s, &basis, &[0, 1]).unwrap();
        let q = drop_one_candidates(&s, &basis, &[1]).unwrap();
        assert!(matches!(avar_compare(&p, &q), Err(Error::InvalidArgument(_))));
    }
}
