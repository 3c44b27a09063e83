//! Data-generating process, baselines and the Monte Carlo harness.
//!
//! Fields are finite combinations of tensor Fourier functions,
//! `X = sum a_x h`, `U = sum a_u h`, and `Y = beta X + U + eps`. Coefficients
//! are drawn once per configuration seed; noise (and, for random designs,
//! locations) are redrawn per replicate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::bases::fourier::{self, FourierTerm};
use crate::bases::{build_basis, generate_locations, BasisMatrix, BasisSpec, LocationDesign};
use crate::candidates::{AvarSource, CandidateMethod};
use crate::error::{Error, Result};
use crate::linalg::{LeastSquares, RANK_TOL};
use crate::mode::KernelSpec;
use crate::sample::{Point, SpatialSample};
use crate::spectra::SupportRule;
use crate::voting::vote_with_basis;

/// SplitMix64 finalizer applied to `master + (index + 1) * golden gamma`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Exposure rougher than the confounder.
    RoughX,
    /// Exposure smoother than the confounder.
    SmoothX,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::RoughX => "rough_x",
            Scenario::SmoothX => "smooth_x",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rough_x" | "rough-x" => Ok(Scenario::RoughX),
            "smooth_x" | "smooth-x" => Ok(Scenario::SmoothX),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }

    /// Default configuration. Indices are 0-based positions in the tensor
    /// Fourier ordering; index 0 (the constant) is never used.
    pub fn config(self) -> DgpConfig {
        let (shared, x_only, u_only) = match self {
            Scenario::RoughX => ((5..=20).collect(), (21..=40).collect(), (1..=4).collect()),
            Scenario::SmoothX => ((5..=20).collect(), (1..=4).collect(), (21..=40).collect()),
        };
        DgpConfig { shared, x_only, u_only, ..DgpConfig::base() }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn d_beta() -> f64 {
    2.5
}
fn d_sigma() -> f64 {
    0.1
}
fn d_n() -> usize {
    900
}
fn d_design() -> LocationDesign {
    LocationDesign::Grid
}
fn d_freq() -> u32 {
    14
}
fn d_range() -> [f64; 2] {
    [3.0, 6.0]
}
fn d_seed() -> u64 {
    20_240_501
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_sigma")]
    pub sigma_eps: f64,
    #[serde(default = "d_n")]
    pub n: usize,
    /// `uniform-random` redraws the locations for every replicate.
    #[serde(default = "d_design")]
    pub design: LocationDesign,
    /// Per-axis frequency cap of the generating Fourier system.
    #[serde(default = "d_freq")]
    pub max_frequency: u32,
    #[serde(default)]
    pub shared: Vec<usize>,
    #[serde(default)]
    pub x_only: Vec<usize>,
    #[serde(default)]
    pub u_only: Vec<usize>,
    /// Coefficient magnitudes are uniform on this interval.
    #[serde(default = "d_range")]
    pub coef_range: [f64; 2],
    /// Give `a_u` the sign of `a_x` on shared indices, so that the exposure
    /// and the confounder are positively correlated. Off by default: signs
    /// are independent and equiprobable.
    #[serde(default)]
    pub align_shared_signs: bool,
    /// Seed for the coefficients; they stay fixed across replicates.
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Scenario::SmoothX.config()
    }
}

impl DgpConfig {
    fn base() -> Self {
        DgpConfig {
            beta: d_beta(),
            sigma_eps: d_sigma(),
            n: d_n(),
            design: d_design(),
            max_frequency: d_freq(),
            shared: Vec::new(),
            x_only: Vec::new(),
            u_only: Vec::new(),
            coef_range: d_range(),
            align_shared_signs: false,
            seed: d_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::invalid("beta must be finite"));
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::invalid("sigma_eps must be finite and >= 0"));
        }
        let [lo, hi] = self.coef_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid("coef_range must satisfy 0 < min <= max"));
        }
        if self.x_only.len() < 2 {
            return Err(Error::invalid("x_only needs at least two indices for a strict plurality at 0"));
        }
        let available = fourier::available(self.max_frequency);
        let mut seen = BTreeSet::new();
        for (name, set) in [("shared", &self.shared), ("x_only", &self.x_only), ("u_only", &self.u_only)] {
            for &j in set {
                if j >= available {
                    return Err(Error::invalid(format!(
                        "{name} index {j} exceeds the {available} generating functions"
                    )));
                }
                if !seen.insert(j) {
                    return Err(Error::invalid(format!("index {j} appears in more than one index set")));
                }
            }
        }
        if self.n < 4 {
            return Err(Error::invalid("n must be at least 4"));
        }
        Ok(())
    }

    /// Indices carrying exposure signal.
    pub fn x_support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.shared.iter().chain(&self.x_only).copied().collect();
        s.sort_unstable();
        s
    }

    /// Indices carrying confounder signal.
    pub fn u_support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.shared.iter().chain(&self.u_only).copied().collect();
        s.sort_unstable();
        s
    }
}

/// Generating quantities of one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta: f64,
    pub sigma_eps: f64,
    pub confounder: Vec<f64>,
    pub noise: Vec<f64>,
    /// Index to coefficient; indices outside the map have coefficient 0.
    pub alpha_x: BTreeMap<usize, f64>,
    pub alpha_u: BTreeMap<usize, f64>,
}

impl Truth {
    pub fn avar_source(&self) -> AvarSource {
        AvarSource::Truth { confounder: self.confounder.clone(), sigma_eps2: self.sigma_eps * self.sigma_eps }
    }
}

#[derive(Debug, Clone)]
pub struct Draw {
    pub sample: SpatialSample,
    pub truth: Truth,
}

/// A configured DGP: coefficients drawn, and fields precomputed when the
/// design is fixed.
#[derive(Debug, Clone)]
pub struct Dgp {
    config: DgpConfig,
    terms: Vec<FourierTerm>,
    alpha_x: BTreeMap<usize, f64>,
    alpha_u: BTreeMap<usize, f64>,
    fixed: Option<(Vec<Point>, Vec<f64>, Vec<f64>)>,
}

impl Dgp {
    pub fn new(config: &DgpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let [lo, hi] = config.coef_range;
        let draw = |rng: &mut ChaCha8Rng| {
            let magnitude = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            if rng.gen::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        };
        let mut alpha_x = BTreeMap::new();
        let mut alpha_u = BTreeMap::new();
        for &j in &config.shared {
            let ax = draw(&mut rng);
            let mut au = draw(&mut rng);
            if config.align_shared_signs {
                au = au.abs().copysign(ax);
            }
            alpha_x.insert(j, ax);
            alpha_u.insert(j, au);
        }
        for &j in &config.x_only {
            alpha_x.insert(j, draw(&mut rng));
        }
        for &j in &config.u_only {
            alpha_u.insert(j, draw(&mut rng));
        }
        let terms = fourier::terms(config.max_frequency);
        let mut dgp = Dgp { config: config.clone(), terms, alpha_x, alpha_u, fixed: None };
        if config.design == LocationDesign::Grid {
            let locations = generate_locations(LocationDesign::Grid, config.n, 0)?;
            let (x, u) = dgp.fields(&locations);
            dgp.fixed = Some((locations, x, u));
        }
        Ok(dgp)
    }

    pub fn config(&self) -> &DgpConfig {
        &self.config
    }

    pub fn alpha_x(&self) -> &BTreeMap<usize, f64> {
        &self.alpha_x
    }

    pub fn alpha_u(&self) -> &BTreeMap<usize, f64> {
        &self.alpha_u
    }

    /// Exposure and confounder evaluated at `locations`.
    pub fn fields(&self, locations: &[Point]) -> (Vec<f64>, Vec<f64>) {
        let eval = |coefs: &BTreeMap<usize, f64>| -> Vec<f64> {
            locations
                .iter()
                .map(|p| coefs.iter().map(|(&j, &a)| a * self.terms[j].eval(p)).sum())
                .collect()
        };
        (eval(&self.alpha_x), eval(&self.alpha_u))
    }

    /// Locations shared by every replicate, when the design is fixed.
    pub fn fixed_locations(&self) -> Option<&[Point]> {
        self.fixed.as_ref().map(|f| f.0.as_slice())
    }

    /// One replicate; `seed` drives the noise and, for random designs, the
    /// locations.
    pub fn draw(&self, seed: u64) -> Result<Draw> {
        let (locations, x, u) = match &self.fixed {
            Some((l, x, u)) => (l.clone(), x.clone(), u.clone()),
            None => {
                let l = generate_locations(self.config.design, self.config.n, derive_seed(seed, u64::MAX))?;
                let (x, u) = self.fields(&l);
                (l, x, u)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = if self.config.sigma_eps > 0.0 {
            let normal = Normal::new(0.0, self.config.sigma_eps)
                .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
            (0..x.len()).map(|_| normal.sample(&mut rng)).collect()
        } else {
            vec![0.0; x.len()]
        };
        let beta = self.config.beta;
        let y: Vec<f64> = x.iter().zip(&u).zip(&noise).map(|((xi, ui), ei)| beta * xi + ui + ei).collect();
        let sample = SpatialSample::new(locations, x, y)?;
        Ok(Draw {
            sample,
            truth: Truth {
                beta,
                sigma_eps: self.config.sigma_eps,
                confounder: u,
                noise,
                alpha_x: self.alpha_x.clone(),
                alpha_u: self.alpha_u.clone(),
            },
        })
    }
}

/// One draw from `config`, using the replicate stream derived from its seed.
pub fn gen_dgp(config: &DgpConfig) -> Result<Draw> {
    Dgp::new(config)?.draw(derive_seed(config.seed, 0))
}

pub fn scenario(name: &str) -> Result<DgpConfig> {
    Ok(Scenario::from_name(name)?.config())
}

/// Slope of the simple regression of `Y` on `[1, X]`.
pub fn ols_baseline(sample: &SpatialSample) -> Result<f64> {
    let x = sample.exposure();
    let y = sample.outcome();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let scale: f64 = x.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    if sxx <= 1e-24 * scale || sxx == 0.0 {
        return Err(Error::Degenerate("exposure is constant".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

fn is_constant(v: &[f64]) -> bool {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo <= 1e-12 * lo.abs().max(hi.abs())
}

/// Coefficient of `X` in the regression of `Y` on `[X, 1, h_1..h_k]`.
/// Constant columns among the first `k` are covered by the intercept and
/// skipped, so `k = 0` (or a constant-only prefix) reproduces the OLS slope.
pub fn basis_adjust_baseline(sample: &SpatialSample, basis: &BasisMatrix, k: usize) -> Result<f64> {
    if k > basis.d() {
        return Err(Error::invalid(format!("k = {k} exceeds basis size {}", basis.d())));
    }
    if basis.n() != sample.len() {
        return Err(Error::invalid("basis and sample differ in size"));
    }
    let kept: Vec<usize> = (0..k).filter(|&j| !is_constant(basis.column(j))).collect();
    let n = sample.len();
    let p = kept.len() + 2;
    if n < p {
        return Err(Error::invalid(format!("n = {n} is too small for {p} regressors")));
    }
    let x = sample.exposure();
    let design = DMatrix::from_fn(n, p, |i, c| match c {
        0 => x[i],
        1 => 1.0,
        _ => basis.column(kept[c - 2])[i],
    });
    // Factor the adjustment columns first so a collinear X is reported as X.
    let mut order: Vec<usize> = (1..p).collect();
    order.push(0);
    let reordered = design.select_columns(&order);
    let ls = LeastSquares::new(&reordered, RANK_TOL).map_err(|column| Error::RankDeficient {
        column,
        context: if column == p - 1 {
            "exposure lies in the span of the adjustment basis".to_string()
        } else {
            "basis adjustment columns are collinear".to_string()
        },
    })?;
    let coef = ls.coefficients(sample.outcome());
    Ok(coef[p - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    VotingProjection,
    VotingDropOne,
    Ols,
    BasisAdjust,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::VotingProjection, Method::VotingDropOne, Method::Ols, Method::BasisAdjust];

    pub fn label(self) -> &'static str {
        match self {
            Method::VotingProjection => "voting-projection",
            Method::VotingDropOne => "voting-drop-one",
            Method::Ols => "ols",
            Method::BasisAdjust => "basis-adjust",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }

    fn uses_basis(self) -> bool {
        !matches!(self, Method::Ols)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A DGP under a label: either a named scenario or a full configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioEntry {
    pub label: String,
    pub dgp: DgpConfig,
}

impl ScenarioEntry {
    pub fn named(s: Scenario) -> Self {
        ScenarioEntry { label: s.name().to_string(), dgp: s.config() }
    }
}

impl<'de> Deserialize<'de> for ScenarioEntry {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Custom {
            label: String,
            dgp: DgpConfig,
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Name(String),
            Custom(Custom),
        }
        match Repr::deserialize(de)? {
            Repr::Name(name) => Scenario::from_name(&name)
                .map(ScenarioEntry::named)
                .map_err(serde::de::Error::custom),
            Repr::Custom(c) => Ok(ScenarioEntry { label: c.label, dgp: c.dgp }),
        }
    }
}

fn d_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn d_adjust_k() -> usize {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub scenarios: Vec<ScenarioEntry>,
    pub bases: Vec<BasisSpec>,
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub support: SupportRule,
    /// Number of leading basis functions used by the basis-adjustment baseline.
    #[serde(default = "d_adjust_k")]
    pub adjust_k: usize,
}

impl MonteCarloConfig {
    pub fn new(scenarios: Vec<ScenarioEntry>, bases: Vec<BasisSpec>) -> Self {
        MonteCarloConfig {
            scenarios,
            bases,
            methods: d_methods(),
            kernel: KernelSpec::default(),
            support: SupportRule::default(),
            adjust_k: d_adjust_k(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::invalid("no scenarios"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods"));
        }
        if self.bases.is_empty() && self.methods.iter().any(|m| m.uses_basis()) {
            return Err(Error::invalid("basis-dependent methods need at least one basis"));
        }
        for s in &self.scenarios {
            s.dgp.validate()?;
            for b in &self.bases {
                b.validate(s.dgp.n)?;
            }
        }
        self.kernel.validate()?;
        self.support.validate()
    }
}

/// Estimates of one replicate for one (scenario, basis) pair; the basis is
/// `"none"` for basis-free methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub scenario: String,
    pub basis: String,
    pub truth: f64,
    /// Method label to estimate; `None` marks a failed estimate.
    pub estimates: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub failures: BTreeMap<String, String>,
}

/// Statistics are NaN (serialized as `null`) when every replicate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    #[serde(deserialize_with = "nullable")]
    pub mean: f64,
    #[serde(deserialize_with = "nullable")]
    pub bias: f64,
    #[serde(deserialize_with = "nullable")]
    pub sd: f64,
    #[serde(deserialize_with = "nullable")]
    pub rmse: f64,
    pub failures: usize,
    pub replicates: usize,
}

fn nullable<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::NAN))
}

impl MethodSummary {
    /// Summary of the finite estimates; `sd` uses the `R - 1` denominator.
    pub fn from_estimates(estimates: &[Option<f64>], truth: f64) -> Self {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let r = ok.len();
        let failures = estimates.len() - r;
        if r == 0 {
            return MethodSummary { mean: f64::NAN, bias: f64::NAN, sd: f64::NAN, rmse: f64::NAN, failures, replicates: 0 };
        }
        let mean = ok.iter().sum::<f64>() / r as f64;
        let sd = if r > 1 {
            (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let rmse = (ok.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / r as f64).sqrt();
        MethodSummary { mean, bias: mean - truth, sd, rmse, failures, replicates: r }
    }
}

/// Summary keys are `scenario/basis/method`.
pub type MonteCarloSummary = BTreeMap<String, MethodSummary>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub replicates: Vec<ReplicateResult>,
    pub summary: MonteCarloSummary,
}

pub fn summary_key(scenario: &str, basis: &str, method: Method) -> String {
    format!("{scenario}/{basis}/{}", method.label())
}

fn estimate_method(
    method: Method,
    sample: &SpatialSample,
    basis: &BasisMatrix,
    config: &MonteCarloConfig,
) -> Result<f64> {
    match method {
        Method::VotingProjection | Method::VotingDropOne => {
            let m = if method == Method::VotingProjection {
                CandidateMethod::Projection
            } else {
                CandidateMethod::DropOne
            };
            vote_with_basis(sample, basis, m, &config.kernel, &config.support, &AvarSource::Proxy)
                .map(|r| r.mode.beta_hat)
        }
        Method::BasisAdjust => basis_adjust_baseline(sample, basis, config.adjust_k.min(basis.d())),
        Method::Ols => ols_baseline(sample),
    }
}

fn record(estimates: &mut BTreeMap<String, Option<f64>>, failures: &mut BTreeMap<String, String>, m: Method, r: Result<f64>) {
    match r {
        Ok(v) if v.is_finite() => {
            estimates.insert(m.label().into(), Some(v));
        }
        Ok(v) => {
            estimates.insert(m.label().into(), None);
            failures.insert(m.label().into(), format!("non-finite estimate {v}"));
        }
        Err(e) => {
            estimates.insert(m.label().into(), None);
            failures.insert(m.label().into(), format!("{}: {e}", e.kind()));
        }
    }
}

/// Run `replicates` replicates of every scenario. Replicate `r` uses seed
/// `derive_seed(seed, r)`, so output does not depend on scheduling.
pub fn run_monte_carlo(config: &MonteCarloConfig, replicates: usize, seed: u64) -> Result<MonteCarloRun> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    config.validate()?;
    let basis_methods: Vec<Method> = config.methods.iter().copied().filter(|m| m.uses_basis()).collect();
    let run_ols = config.methods.contains(&Method::Ols);

    let mut results = Vec::new();
    for entry in &config.scenarios {
        let dgp = Dgp::new(&entry.dgp)?;
        // Fixed designs share one build per basis across replicates.
        let fixed_bases: Option<Vec<Result<BasisMatrix>>> = dgp.fixed_locations().map(|locs| {
            config
                .bases
                .par_iter()
                .map(|spec| {
                    let basis = build_basis(spec, locs)?;
                    basis.dual()?;
                    Ok(basis)
                })
                .collect()
        });
        let per_rep: Vec<Result<Vec<ReplicateResult>>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let rep_seed = derive_seed(seed, r as u64);
                let draw = dgp.draw(rep_seed)?;
                let mut rows = Vec::new();
                let new_row = |basis: String| ReplicateResult {
                    replicate: r,
                    seed: rep_seed,
                    scenario: entry.label.clone(),
                    basis,
                    truth: draw.truth.beta,
                    estimates: BTreeMap::new(),
                    failures: BTreeMap::new(),
                };
                if run_ols {
                    let mut row = new_row("none".into());
                    record(&mut row.estimates, &mut row.failures, Method::Ols, ols_baseline(&draw.sample));
                    rows.push(row);
                }
                if !basis_methods.is_empty() {
                    for (b, spec) in config.bases.iter().enumerate() {
                        let mut row = new_row(spec.label());
                        let owned;
                        let built: std::result::Result<&BasisMatrix, String> = match &fixed_bases {
                            Some(all) => all[b].as_ref().map_err(|e| e.to_string()),
                            None => {
                                owned = build_basis(spec, draw.sample.locations());
                                owned.as_ref().map_err(|e| e.to_string())
                            }
                        };
                        for &m in &basis_methods {
                            match &built {
                                Ok(basis) => {
                                    let est = estimate_method(m, &draw.sample, basis, config);
                                    record(&mut row.estimates, &mut row.failures, m, est);
                                }
                                Err(msg) => {
                                    row.estimates.insert(m.label().into(), None);
                                    row.failures.insert(m.label().into(), format!("basis: {msg}"));
                                }
                            }
                        }
                        rows.push(row);
                    }
                }
                Ok(rows)
            })
            .collect();
        for rows in per_rep {
            results.extend(rows?);
        }
    }
    let summary = summarize(&results);
    Ok(MonteCarloRun { replicates: results, summary })
}

pub fn summarize(results: &[ReplicateResult]) -> MonteCarloSummary {
    let mut groups: BTreeMap<String, (f64, Vec<Option<f64>>)> = BTreeMap::new();
    for row in results {
        for (method, est) in &row.estimates {
            let key = format!("{}/{}/{}", row.scenario, row.basis, method);
            groups.entry(key).or_insert_with(|| (row.truth, Vec::new())).1.push(*est);
        }
    }
    groups
        .into_iter()
        .map(|(k, (truth, ests))| (k, MethodSummary::from_estimates(&ests, truth)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> DgpConfig {
        DgpConfig { n: 400, ..scenario.config() }
    }

    #[test]
    fn noiseless_unconfounded_outcome_is_linear() {
        let cfg = DgpConfig { sigma_eps: 0.0, shared: vec![], u_only: vec![], ..small(Scenario::SmoothX) };
        let d = gen_dgp(&cfg).unwrap();
        for (x, y) in d.sample.exposure().iter().zip(d.sample.outcome()) {
            assert!((y - 2.5 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficient_magnitudes_lie_in_range() {
        let dgp = Dgp::new(&DgpConfig::default()).unwrap();
        for a in dgp.alpha_x().values().chain(dgp.alpha_u().values()) {
            assert!((3.0..=6.0).contains(&a.abs()));
        }
        assert_eq!(dgp.alpha_x().len(), 20);
        assert_eq!(dgp.alpha_u().len(), 36);
    }

    #[test]
    fn scenario_roughness_ordering() {
        let terms = fourier::terms(14);
        let top = |s: &[usize]| s.iter().map(|&j| terms[j].total_frequency()).max().unwrap();
        let rough = Scenario::RoughX.config();
        assert!(top(&rough.x_support()) > top(&rough.u_support()));
        let smooth = Scenario::SmoothX.config();
        assert!(top(&smooth.u_support()) > top(&smooth.x_support()));
        for c in [rough, smooth] {
            c.validate().unwrap();
            assert!(!c.x_support().contains(&0) && !c.u_support().contains(&0));
        }
        assert!(Scenario::from_name("wavy").is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = small(Scenario::SmoothX);
        assert!(DgpConfig { x_only: vec![1], ..base.clone() }.validate().is_err());
        assert!(DgpConfig { shared: vec![1, 5], ..base.clone() }.validate().is_err());
        assert!(DgpConfig { u_only: vec![10_000], ..base.clone() }.validate().is_err());
        assert!(DgpConfig { sigma_eps: -1.0, ..base }.validate().is_err());
    }

    #[test]
    fn ols_hand_case_and_constant_exposure() {
        let locs: Vec<Point> = (0..3).map(|i| Point::new(0.1 * i as f64, 0.5)).collect();
        let s = SpatialSample::new(locs.clone(), vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 5.0]).unwrap();
        assert!((ols_baseline(&s).unwrap() - 2.0).abs() < 1e-15);
        let c = SpatialSample::new(locs, vec![1.0; 3], vec![1.0, 3.0, 5.0]).unwrap();
        assert!(matches!(ols_baseline(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn basis_adjust_with_no_columns_is_ols() {
        let d = gen_dgp(&small(Scenario::RoughX)).unwrap();
        let basis = build_basis(&BasisSpec::fourier(30), d.sample.locations()).unwrap();
        let ols = ols_baseline(&d.sample).unwrap();
        for k in [0, 1] {
            let adj = basis_adjust_baseline(&d.sample, &basis, k).unwrap();
            assert!((adj - ols).abs() < 1e-9, "k = {k}: {adj} vs {ols}");
        }
    }

    #[test]
    fn basis_adjust_recovers_beta_when_confounder_is_spanned() {
        let cfg = DgpConfig { sigma_eps: 0.0, ..small(Scenario::RoughX) };
        let d = gen_dgp(&cfg).unwrap();
        let basis = build_basis(&BasisSpec::fourier(21), d.sample.locations()).unwrap();
        let adj = basis_adjust_baseline(&d.sample, &basis, 21).unwrap();
        assert!((adj - 2.5).abs() < 1e-9, "{adj}");
    }

    #[test]
    fn summary_rmse_identity() {
        let ests = [Some(2.4), Some(2.7), None, Some(2.55), Some(2.45)];
        let s = MethodSummary::from_estimates(&ests, 2.5);
        let r = s.replicates as f64;
        assert_eq!(s.failures, 1);
        assert!((s.rmse.powi(2) - (s.bias.powi(2) + s.sd.powi(2) * (r - 1.0) / r)).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let cfg = MonteCarloConfig::new(
            vec![ScenarioEntry { label: "s".into(), dgp: small(Scenario::SmoothX) }],
            vec![BasisSpec::fourier(60)],
        );
        let a = run_monte_carlo(&cfg, 3, 11).unwrap();
        let b = run_monte_carlo(&cfg, 3, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.replicates.len(), 6);
        // X lies in the span of the first 21 Fourier functions in this scenario.
        assert_eq!(a.summary["s/fourier-tensor-d60/basis-adjust"].failures, 3);
        let back: MonteCarloRun = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert!(back.summary["s/fourier-tensor-d60/basis-adjust"].mean.is_nan());
        assert!(a.summary.contains_key("s/fourier-tensor-d60/voting-drop-one"));
        assert!(a.summary.contains_key("s/none/ols"));
    }

    #[test]
    fn scenario_entries_parse_from_names_or_objects() {
        let e: Vec<ScenarioEntry> =
            serde_json::from_str(r#"["smooth_x", {"label": "mine", "dgp": {"x_only": [1, 2], "n": 16}}]"#).unwrap();
        assert_eq!(e[0], ScenarioEntry::named(Scenario::SmoothX));
        assert_eq!(e[1].dgp.n, 16);
        assert!(serde_json::from_str::<Vec<ScenarioEntry>>(r#"["nope"]"#).is_err());
    }
}
