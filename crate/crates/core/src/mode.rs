//! Kernel density estimates over candidate values and their mode.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::candidates::SkippedCandidate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Gaussian,
    #[default]
    Triangular,
    Epanechnikov,
}

impl KernelKind {
    /// `K(u)`; every kernel integrates to one.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelKind::Triangular => (1.0 - u.abs()).max(0.0),
            KernelKind::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius `R` with `supp K = [-R, R]`, if compact.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            KernelKind::Gaussian => None,
            KernelKind::Triangular | KernelKind::Epanechnikov => Some(1.0),
        }
    }
}

/// Explicit bandwidth or the automatic rule of [`auto_bandwidth`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(h) => Ok(Bandwidth::Fixed(h)),
            Repr::Text(t) if t == "auto" => Ok(Bandwidth::Auto),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "bandwidth must be a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

pub const DEFAULT_GRID_POINTS: usize = 4096;
pub const MIN_GRID_POINTS: usize = 256;
/// Absolute tolerance of the golden-section refinement.
pub const REFINE_TOL: f64 = 1e-10;

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            kernel: KernelKind::Triangular,
            bandwidth: Bandwidth::Auto,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

impl KernelSpec {
    pub fn new(kernel: KernelKind, bandwidth: Bandwidth) -> Self {
        KernelSpec { kernel, bandwidth, ..KernelSpec::default() }
    }

    pub fn fixed(kernel: KernelKind, h: f64) -> Self {
        KernelSpec::new(kernel, Bandwidth::Fixed(h))
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(format!("bandwidth must be finite and positive, got {h}")));
            }
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(Error::invalid(format!(
                "grid_points must be at least {MIN_GRID_POINTS}, got {}",
                self.grid_points
            )));
        }
        Ok(())
    }
}

/// Result of mode finding: the estimate, the bandwidth actually used and the
/// density curve it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    pub beta_hat: f64,
    pub kernel: KernelSpec,
    /// Bandwidth after resolving `auto`.
    pub bandwidth: f64,
    pub density_curve: Vec<(f64, f64)>,
    pub candidate_count: usize,
    #[serde(default)]
    pub skipped: Vec<SkippedCandidate>,
}

/// Density of sorted values, with windowed sums for compact kernels.
struct Kde<'a> {
    sorted: &'a [f64],
    kernel: KernelKind,
    h: f64,
}

impl Kde<'_> {
    fn density(&self, x: f64) -> f64 {
        let window = match self.kernel.support_radius() {
            Some(r) => {
                let lo = self.sorted.partition_point(|&v| v < x - r * self.h);
                let hi = self.sorted.partition_point(|&v| v <= x + r * self.h);
                &self.sorted[lo..hi]
            }
            None => self.sorted,
        };
        let sum: f64 = window.iter().map(|&a| self.kernel.eval((x - a) / self.h)).sum();
        sum / (self.sorted.len() as f64 * self.h)
    }
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("no values to smooth"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(sorted)
}

/// `(1/(m h)) sum_i K((x - a_i)/h)`. The bandwidth must be explicit.
pub fn kde_eval(values: &[f64], spec: &KernelSpec, x: f64) -> Result<f64> {
    let h = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => return Err(Error::invalid("kde_eval needs an explicit bandwidth")),
    };
    spec.validate()?;
    let sorted = sorted_finite(values)?;
    Ok(Kde { sorted: &sorted, kernel: spec.kernel, h }.density(x))
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// `min(0.9 sd m^(-1/5), median gap between sorted distinct values / 2)`.
/// Falls back to 1 when the values carry no scale (all equal).
pub fn auto_bandwidth(values: &[f64]) -> f64 {
    let m = values.len();
    let mut candidates = Vec::with_capacity(2);
    if m >= 2 {
        let mean = values.iter().sum::<f64>() / m as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        candidates.push(0.9 * var.sqrt() * (m as f64).powf(-0.2));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    distinct.dedup();
    if distinct.len() >= 2 {
        let mut gaps: Vec<f64> = distinct.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        candidates.push(0.5 * median(&gaps));
    }
    let h = candidates
        .into_iter()
        .filter(|h| h.is_finite() && *h > 0.0)
        .fold(f64::INFINITY, f64::min);
    if h.is_finite() {
        h
    } else {
        1.0
    }
}

/// A bandwidth below which a compact-support kernel recovers the unique
/// plurality mode of `values` exactly: `delta / (2R) * (1 - 1e-6)`. When the
/// mode holds a strict majority, `delta` is the distance from the mode to the
/// nearest other value. Otherwise neighbouring non-mode clusters could pool
/// their mass, so `delta` is the smallest gap between any two distinct values.
/// Returns `+inf` when all values are equal.
pub fn compute_h0(values: &[f64], kernel: KernelKind) -> Result<f64> {
    let radius = kernel
        .support_radius()
        .ok_or_else(|| Error::invalid("h0 is only defined for compact-support kernels"))?;
    let sorted = sorted_finite(values)?;
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match groups.last_mut() {
            Some((g, c)) if *g == v => *c += 1,
            _ => groups.push((v, 1)),
        }
    }
    let top = groups.iter().map(|g| g.1).max().expect("non-empty");
    let mut tops = groups.iter().filter(|g| g.1 == top);
    let mode = tops.next().expect("non-empty").0;
    if tops.next().is_some() {
        return Err(Error::NoUniqueMode);
    }
    if groups.len() == 1 {
        return Ok(f64::INFINITY);
    }
    let m: usize = groups.iter().map(|g| g.1).sum();
    let delta = if 2 * top > m {
        groups
            .iter()
            .filter(|g| g.0 != mode)
            .map(|g| (g.0 - mode).abs())
            .fold(f64::INFINITY, f64::min)
    } else {
        groups.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min)
    };
    Ok(delta / (2.0 * radius) * (1.0 - 1e-6))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= REFINE_TOL {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Mode of the kernel density of `values`.
///
/// The density is evaluated on `grid_points` equispaced points spanning
/// `[min - 3h, max + 3h]` and at every data value (so narrow bumps are never
/// stepped over). The best point is refined by golden-section search within
/// its neighbours. Ties go to the smallest `x`.
pub fn kde_mode(values: &[f64], spec: &KernelSpec) -> Result<ModeEstimate> {
    spec.validate()?;
    let sorted = sorted_finite(values)?;
    let h = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => auto_bandwidth(&sorted),
    };
    let kde = Kde { sorted: &sorted, kernel: spec.kernel, h };

    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let g = spec.grid_points;
    let step = (hi - lo) / (g - 1) as f64;
    let density_curve: Vec<(f64, f64)> = (0..g)
        .map(|i| {
            let x = if i == g - 1 { hi } else { lo + i as f64 * step };
            (x, kde.density(x))
        })
        .collect();

    let mut points: Vec<(f64, f64)> = density_curve.clone();
    let mut distinct = sorted.clone();
    distinct.dedup();
    points.extend(distinct.iter().map(|&x| (x, kde.density(x))));
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    points.dedup_by(|a, b| a.0 == b.0);

    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.1 > points[best].1 {
            best = i;
        }
    }
    let left = points[best.saturating_sub(1)].0;
    let right = points[(best + 1).min(points.len() - 1)].0;
    let (mut beta_hat, mut top) = points[best];
    if right > left {
        let (x, fx) = golden_max(&|x| kde.density(x), left, right);
        if fx > top {
            beta_hat = x;
            top = fx;
        }
    }
    debug_assert!(top >= 0.0);

    Ok(ModeEstimate {
        beta_hat,
        kernel: *spec,
        bandwidth: h,
        density_curve,
        candidate_count: values.len(),
        skipped: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_bump_at_centre() {
        let v = kde_eval(&[0.0], &KernelSpec::fixed(KernelKind::Gaussian, 1.0), 0.0).unwrap();
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.3989).abs() < 1e-4);
    }

    #[test]
    fn compact_kernel_vanishes_far_away() {
        let spec = KernelSpec::fixed(KernelKind::Triangular, 0.5);
        assert_eq!(kde_eval(&[1.0, 2.0, 3.0], &spec, 3.0 + 3.0 * 0.5 + 1e-9).unwrap(), 0.0);
        assert_eq!(kde_eval(&[1.0, 2.0, 3.0], &spec, -100.0).unwrap(), 0.0);
    }

    #[test]
    fn triangular_hand_value() {
        // only the bump at 2 reaches x = 2: (1 / (3 * 0.5)) * K(0)
        let spec = KernelSpec::fixed(KernelKind::Triangular, 0.5);
        let v = kde_eval(&[1.0, 2.0, 3.0], &spec, 2.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_values_are_rejected() {
        let spec = KernelSpec::fixed(KernelKind::Gaussian, 1.0);
        assert!(matches!(kde_eval(&[], &spec, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(kde_mode(&[], &spec), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn auto_bandwidth_needs_explicit_for_eval() {
        assert!(kde_eval(&[1.0], &KernelSpec::default(), 0.0).is_err());
    }

    #[test]
    fn h0_examples() {
        let h = compute_h0(&[0.0, 0.0, 1.0], KernelKind::Triangular).unwrap();
        assert!(h < 0.5 && h > 0.5 * (1.0 - 1e-5));
        assert_eq!(compute_h0(&[5.0, 5.0, 5.0], KernelKind::Epanechnikov).unwrap(), f64::INFINITY);
        let h = compute_h0(&[0.0, 0.0, 0.001, 2.0, 2.0, 2.0, 2.0], KernelKind::Triangular).unwrap();
        assert!((h - (2.0 - 0.001) / 2.0 * (1.0 - 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn h0_guards_against_pooled_clusters() {
        // Three singletons close together outweigh the pair at -20.5 when
        // their bumps overlap; the bound must keep them apart.
        let values = [8.322, -20.509, 5.111, -20.509, 2.133];
        let h = compute_h0(&values, KernelKind::Triangular).unwrap();
        assert!((h - (5.111 - 2.133) / 2.0 * (1.0 - 1e-6)).abs() < 1e-12);
        let m = kde_mode(&values, &KernelSpec::fixed(KernelKind::Triangular, h)).unwrap();
        assert_eq!(m.beta_hat, -20.509);
        let wide = kde_mode(&values, &KernelSpec::fixed(KernelKind::Triangular, 9.8)).unwrap();
        assert_ne!(wide.beta_hat, -20.509);
    }

    #[test]
    fn h0_errors() {
        assert!(matches!(compute_h0(&[1.0, 2.0], KernelKind::Triangular), Err(Error::NoUniqueMode)));
        assert!(matches!(
            compute_h0(&[1.0, 1.0, 2.0, 2.0], KernelKind::Triangular),
            Err(Error::NoUniqueMode)
        ));
        assert!(matches!(compute_h0(&[1.0, 1.0], KernelKind::Gaussian), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn plurality_mode_with_small_bandwidth() {
        let m = kde_mode(&[1.0, 1.0, 2.0, 3.0], &KernelSpec::fixed(KernelKind::Triangular, 0.1)).unwrap();
        assert_eq!(m.beta_hat, 1.0);
    }

    #[test]
    fn singleton_mode_is_the_value() {
        for kernel in [KernelKind::Gaussian, KernelKind::Triangular, KernelKind::Epanechnikov] {
            let m = kde_mode(&[4.25], &KernelSpec::new(kernel, Bandwidth::Auto)).unwrap();
            assert_eq!(m.beta_hat, 4.25);
        }
    }

    #[test]
    fn bandwidth_serde_forms() {
        let s: KernelSpec = serde_json::from_str(r#"{"kernel":"gaussian","bandwidth":0.25}"#).unwrap();
        assert_eq!(s.bandwidth, Bandwidth::Fixed(0.25));
        let s: KernelSpec = serde_json::from_str(r#"{"bandwidth":"auto"}"#).unwrap();
        assert_eq!(s, KernelSpec::default());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"bandwidth":"wide"}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"bw":1}"#).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::fixed(KernelKind::Gaussian, 0.0).validate().is_err());
        assert!(KernelSpec::fixed(KernelKind::Gaussian, f64::NAN).validate().is_err());
        let s = KernelSpec { grid_points: 100, ..KernelSpec::default() };
        assert!(s.validate().is_err());
    }
}
