//! Orthonormal spatial basis families on the unit square.

pub mod cstar;
pub mod fourier;
pub mod kernel_eigen;
pub mod radial;

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LeastSquares, RANK_TOL};
use crate::sample::Point;

pub use cstar::{c_star, c_star_weighted};
pub use kernel_eigen::MaternParams;
pub use radial::KnotPlacement;

/// Tolerance for the orthonormalization postcondition `||H^T H / n - I||_max`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocationDesign {
    /// Cell centres of a regular `m x m` grid.
    Grid,
    /// I.i.d. uniform draws on the unit square.
    UniformRandom,
}

impl fmt::Display for LocationDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocationDesign::Grid => "grid",
            LocationDesign::UniformRandom => "uniform-random",
        })
    }
}

/// Generate `n` locations. Grid points are ordered with `s1` outer and `s2`
/// inner. Random draws are reproducible from `seed`.
pub fn generate_locations(kind: LocationDesign, n: usize, seed: u64) -> Result<Vec<Point>> {
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 locations, got {n}")));
    }
    match kind {
        LocationDesign::Grid => {
            let m = (n as f64).sqrt().round() as usize;
            if m * m != n {
                return Err(Error::invalid(format!("grid design needs a perfect square, got {n}")));
            }
            let step = 1.0 / m as f64;
            Ok((0..m)
                .flat_map(|i| (0..m).map(move |k| Point::new((i as f64 + 0.5) * step, (k as f64 + 0.5) * step)))
                .collect())
        }
        LocationDesign::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>())).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    FourierTensor,
    KernelEigen,
    RadialSpline,
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisFamily::FourierTensor => "fourier-tensor",
            BasisFamily::KernelEigen => "kernel-eigen",
            BasisFamily::RadialSpline => "radial-spline",
        })
    }
}

fn default_max_frequency() -> u32 {
    14
}

/// Which basis to build and how many functions. Parameters that do not apply
/// to `family` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub d: usize,
    #[serde(default)]
    pub orthonormalize: bool,
    /// Fourier: largest frequency per axis.
    #[serde(default = "default_max_frequency")]
    pub max_frequency: u32,
    /// Kernel-eigen: Matérn covariance parameters.
    #[serde(default)]
    pub matern: MaternParams,
    /// Radial spline: knot placement rule (count is `d - 3`).
    #[serde(default)]
    pub knots: KnotPlacement,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, d: usize) -> Self {
        BasisSpec {
            family,
            d,
            orthonormalize: false,
            max_frequency: default_max_frequency(),
            matern: MaternParams::default(),
            knots: KnotPlacement::default(),
        }
    }

    pub fn fourier(d: usize) -> Self {
        BasisSpec::new(BasisFamily::FourierTensor, d)
    }

    pub fn kernel_eigen(d: usize) -> Self {
        BasisSpec::new(BasisFamily::KernelEigen, d)
    }

    pub fn radial_spline(d: usize) -> Self {
        BasisSpec::new(BasisFamily::RadialSpline, d)
    }

    pub fn orthonormalized(mut self) -> Self {
        self.orthonormalize = true;
        self
    }

    pub fn with_d(&self, d: usize) -> Self {
        BasisSpec { d, ..self.clone() }
    }

    /// Number of functions the family can provide on `n` locations.
    pub fn available(&self, n: usize) -> usize {
        match self.family {
            BasisFamily::FourierTensor => fourier::available(self.max_frequency),
            BasisFamily::KernelEigen => n,
            BasisFamily::RadialSpline => usize::MAX,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("basis needs at least one function"));
        }
        if self.family == BasisFamily::FourierTensor && self.max_frequency == 0 {
            return Err(Error::invalid("max_frequency must be positive"));
        }
        if self.family == BasisFamily::KernelEigen {
            self.matern.validate()?;
        }
        let available = self.available(n);
        if self.d > available {
            return Err(Error::invalid(format!(
                "{} provides {} functions on {} locations, requested d = {}",
                self.family, available, n, self.d
            )));
        }
        if self.orthonormalize && self.d > n {
            return Err(Error::invalid(format!(
                "cannot orthonormalize d = {} functions over n = {} locations",
                self.d, n
            )));
        }
        Ok(())
    }

    /// Short label, e.g. `radial-spline-d250-orth`.
    pub fn label(&self) -> String {
        let mut s = format!("{}-d{}", self.family, self.d);
        if self.orthonormalize {
            s.push_str("-orth");
        }
        s
    }

    /// Whether the first `k` columns of the `d`-column basis are the
    /// `k`-column basis, so one build can serve every smaller `d`.
    fn prefix_stable(&self) -> bool {
        !matches!(self.family, BasisFamily::RadialSpline)
    }
}

/// Evaluations of `d` basis functions at `n` locations (column `j` is
/// `h_j(S_1..S_n)`), with the deviation of `H^T H / n` from the identity.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    values: DMatrix<f64>,
    spec: Option<BasisSpec>,
    label: String,
    gram_deviation: f64,
    factor: OnceLock<std::result::Result<LeastSquares, usize>>,
    dual: OnceLock<DMatrix<f64>>,
}

impl BasisMatrix {
    /// Wrap an arbitrary evaluation matrix (rows are locations).
    pub fn from_values(values: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("basis matrix contains non-finite entries"));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("basis matrix is empty"));
        }
        Ok(BasisMatrix::assemble(values, None, label.into()))
    }

    fn assemble(values: DMatrix<f64>, spec: Option<BasisSpec>, label: String) -> Self {
        let gram_deviation = gram_deviation(&values);
        BasisMatrix {
            values,
            spec,
            label,
            gram_deviation,
            factor: OnceLock::new(),
            dual: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn spec(&self) -> Option<&BasisSpec> {
        self.spec.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `||H^T H / n - I||_max`.
    pub fn gram_deviation(&self) -> f64 {
        self.gram_deviation
    }

    /// Shared QR factorization, computed on first use.
    pub fn factor(&self) -> Result<&LeastSquares> {
        match self
            .factor
            .get_or_init(|| LeastSquares::new(&self.values, RANK_TOL))
        {
            Ok(ls) => Ok(ls),
            Err(column) => Err(Error::RankDeficient {
                column: *column,
                context: format!("basis {} columns are linearly dependent", self.label),
            }),
        }
    }

    /// `H (H^T H)^{-1}`, computed on first use; see [`LeastSquares::dual`].
    pub fn dual(&self) -> Result<&DMatrix<f64>> {
        let ls = self.factor()?;
        Ok(self.dual.get_or_init(|| ls.dual()))
    }

    /// The first `d` columns.
    pub fn truncate(&self, d: usize) -> Result<BasisMatrix> {
        if d == 0 || d > self.d() {
            return Err(Error::invalid(format!("cannot truncate {} columns to {d}", self.d())));
        }
        let values = self.values.columns(0, d).into_owned();
        let spec = self.spec.as_ref().map(|s| s.with_d(d));
        let label = spec.as_ref().map(BasisSpec::label).unwrap_or_else(|| format!("{}[..{d}]", self.label));
        Ok(BasisMatrix::assemble(values, spec, label))
    }

    /// Stable 64-bit FNV-1a digest of the label and the matrix bits.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.label.as_bytes());
        eat(&(self.n() as u64).to_le_bytes());
        eat(&(self.d() as u64).to_le_bytes());
        for v in self.values.iter() {
            eat(&v.to_bits().to_le_bytes());
        }
        format!("{}:{h:016x}", self.label)
    }
}

fn gram_deviation(values: &DMatrix<f64>) -> f64 {
    let n = values.nrows() as f64;
    let gram = values.tr_mul(values) / n;
    let mut dev = 0.0_f64;
    for ((i, k), v) in gram.iter().enumerate().map(|(idx, v)| ((idx % gram.nrows(), idx / gram.nrows()), v)) {
        let target = if i == k { 1.0 } else { 0.0 };
        dev = dev.max((v - target).abs());
    }
    dev
}

/// Replace the columns by `sqrt(n) Q` from an order-preserving QR, so that
/// `H^T H / n = I` and the span of every leading block is unchanged.
fn orthonormalize(values: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>> {
    let ls = LeastSquares::new(values, RANK_TOL).map_err(|column| Error::RankDeficient {
        column,
        context: format!("orthonormalizing {label}: column is in the span of the preceding columns"),
    })?;
    Ok(ls.q() * (values.nrows() as f64).sqrt())
}

fn raw_values(spec: &BasisSpec, locations: &[Point]) -> Result<DMatrix<f64>> {
    let n = locations.len();
    let d = spec.d;
    Ok(match spec.family {
        BasisFamily::FourierTensor => {
            let terms = fourier::terms(spec.max_frequency);
            DMatrix::from_fn(n, d, |i, j| terms[j].eval(&locations[i]))
        }
        BasisFamily::KernelEigen => {
            let eig = kernel_eigen::decompose(locations, &spec.matern)?;
            eig.vectors.columns(0, d).into_owned()
        }
        BasisFamily::RadialSpline => {
            let knots = radial::knots(spec.knots, d);
            DMatrix::from_fn(n, d, |i, j| radial::eval(j, &locations[i], &knots))
        }
    })
}

/// Evaluate the basis described by `spec` at `locations`.
pub fn build_basis(spec: &BasisSpec, locations: &[Point]) -> Result<BasisMatrix> {
    if locations.is_empty() {
        return Err(Error::invalid("no locations"));
    }
    spec.validate(locations.len())?;
    let label = spec.label();
    let mut values = raw_values(spec, locations)?;
    if spec.orthonormalize {
        values = orthonormalize(&values, &label)?;
    }
    let basis = BasisMatrix::assemble(values, Some(spec.clone()), label);
    if spec.orthonormalize && basis.gram_deviation >= ORTHONORMAL_TOL {
        return Err(Error::Degenerate(format!(
            "orthonormalized {} has Gram deviation {:.3e}",
            basis.label, basis.gram_deviation
        )));
    }
    Ok(basis)
}

/// Builds bases of one family for several `d`, reusing a single build where
/// the family is prefix-stable (Fourier and kernel-eigen, with or without
/// orthonormalization).
#[derive(Debug)]
pub struct BasisSweep {
    template: BasisSpec,
    locations: Vec<Point>,
    full: Option<BasisMatrix>,
    /// First column (0-based) at which the full build was rank deficient.
    failed_at: Option<usize>,
}

impl BasisSweep {
    pub fn new(template: &BasisSpec, locations: &[Point], d_max: usize) -> Result<Self> {
        let mut sweep = BasisSweep {
            template: template.clone(),
            locations: locations.to_vec(),
            full: None,
            failed_at: None,
        };
        if template.prefix_stable() {
            let spec = template.with_d(d_max.min(template.available(locations.len())));
            match build_basis(&spec, locations) {
                Ok(b) => sweep.full = Some(b),
                Err(Error::RankDeficient { column, .. }) if column >= 1 => {
                    sweep.failed_at = Some(column);
                    sweep.full = Some(build_basis(&spec.with_d(column), locations)?);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(sweep)
    }

    pub fn basis(&self, d: usize) -> Result<BasisMatrix> {
        let spec = self.template.with_d(d);
        spec.validate(self.locations.len())?;
        match &self.full {
            Some(full) => {
                if let Some(column) = self.failed_at {
                    if d > column {
                        return Err(Error::RankDeficient {
                            column,
                            context: format!("orthonormalizing {}", spec.label()),
                        });
                    }
                }
                if d == full.d() {
                    Ok(full.clone())
                } else {
                    full.truncate(d)
                }
            }
            None => build_basis(&spec, &self.locations),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Point> {
        generate_locations(LocationDesign::Grid, n, 0).unwrap()
    }

    #[test]
    fn two_by_two_grid_cell_centres() {
        let g = grid(4);
        let expect = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];
        for (p, (a, b)) in g.iter().zip(expect) {
            assert_eq!((p.s1, p.s2), (a, b));
        }
    }

    #[test]
    fn grid_of_nine_hundred_is_thirty_by_thirty() {
        let g = grid(900);
        assert_eq!(g.len(), 900);
        let mut s1: Vec<f64> = g.iter().map(|p| p.s1).collect();
        s1.dedup();
        assert_eq!(s1.len(), 30);
        assert!((g[0].s1 - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn location_errors() {
        assert!(matches!(
            generate_locations(LocationDesign::Grid, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_locations(LocationDesign::UniformRandom, 3, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn random_locations_are_seeded() {
        let a = generate_locations(LocationDesign::UniformRandom, 100, 7).unwrap();
        let b = generate_locations(LocationDesign::UniformRandom, 100, 7).unwrap();
        let c = generate_locations(LocationDesign::UniformRandom, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|p| (0.0..1.0).contains(&p.s1) && (0.0..1.0).contains(&p.s2)));
    }

    #[test]
    fn single_fourier_function_is_constant() {
        let b = build_basis(&BasisSpec::fourier(1), &grid(16)).unwrap();
        assert!(b.column(0).iter().all(|&v| v == 1.0));
        assert!(b.gram_deviation() < 1e-15);
    }

    #[test]
    fn raw_fourier_is_orthonormal_on_grid() {
        let b = build_basis(&BasisSpec::fourier(100), &grid(900)).unwrap();
        assert!(b.gram_deviation() < 1e-6, "{}", b.gram_deviation());
    }

    #[test]
    fn radial_spline_orthonormalized() {
        let b = build_basis(&BasisSpec::radial_spline(50).orthonormalized(), &grid(900)).unwrap();
        assert!(b.gram_deviation() < 1e-8);
    }

    #[test]
    fn kernel_eigen_columns_are_orthonormal() {
        let b = build_basis(&BasisSpec::kernel_eigen(60), &grid(400)).unwrap();
        assert!(b.gram_deviation() < 1e-10, "{}", b.gram_deviation());
    }

    #[test]
    fn too_many_functions_is_invalid() {
        let spec = BasisSpec { max_frequency: 2, ..BasisSpec::fourier(26) };
        assert!(matches!(build_basis(&spec, &grid(900)), Err(Error::InvalidArgument(_))));
        let spec = BasisSpec::radial_spline(20).orthonormalized();
        assert!(matches!(build_basis(&spec, &grid(16)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn orthonormalizing_a_dependent_set_names_the_column() {
        // On a 2x2 grid the Fourier functions of frequency 1 in s1 coincide up
        // to sign, so column 2 (cos1 s1) is a multiple of column 1 (sin1 s1).
        let spec = BasisSpec::fourier(3).orthonormalized();
        match build_basis(&spec, &grid(4)) {
            Err(Error::RankDeficient { column, .. }) => assert_eq!(column, 2),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn build_is_deterministic() {
        let locs = generate_locations(LocationDesign::UniformRandom, 200, 3).unwrap();
        for spec in [
            BasisSpec::fourier(30).orthonormalized(),
            BasisSpec::kernel_eigen(30),
            BasisSpec::radial_spline(30).orthonormalized(),
        ] {
            let a = build_basis(&spec, &locs).unwrap();
            let b = build_basis(&spec, &locs).unwrap();
            assert_eq!(a.fingerprint(), b.fingerprint());
        }
    }

    #[test]
    fn sweep_prefix_matches_direct_build() {
        let locs = grid(225);
        for template in [BasisSpec::kernel_eigen(1), BasisSpec::fourier(1).orthonormalized()] {
            let sweep = BasisSweep::new(&template, &locs, 80).unwrap();
            let direct = build_basis(&template.with_d(40), &locs).unwrap();
            let swept = sweep.basis(40).unwrap();
            assert!((direct.values() - swept.values()).abs().max() < 1e-10);
        }
    }
}
