//! Run configuration, CSV ingestion and report / plot-data output.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bases::BasisSpec;
use crate::candidates::{CandidateMethod, CandidateSet};
use crate::error::{Error, Result};
use crate::mode::{KernelSpec, ModeEstimate};
use crate::sample::{Point, SpatialSample};
use crate::simulation::{Method, MonteCarloConfig, MonteCarloSummary, ReplicateResult, ScenarioEntry};
use crate::spectra::{CoefficientSpectrum, SupportRule, TrajectoryPoint};
use crate::voting::VotingConfig;

fn d_method() -> CandidateMethod {
    CandidateMethod::DropOne
}
fn d_true() -> bool {
    true
}
fn d_adjust_k() -> usize {
    21
}

/// Configuration shared by every subcommand. Each subcommand reads the
/// fields it needs and rejects the run if a required one is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Analysis basis for `estimate`, `diagnose` and `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSpec>,
    /// Analysis bases for `simulate`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bases: Vec<BasisSpec>,
    #[serde(default = "d_method")]
    pub method: CandidateMethod,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub support: SupportRule,
    #[serde(default = "d_true")]
    pub partial_out: bool,
    #[serde(default = "d_adjust_k")]
    pub adjust_k: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub d_values: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.kernel.validate().map_err(cfg)?;
        self.support.validate().map_err(cfg)?;
        if self.d_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("d_values must be strictly increasing".into()));
        }
        if self.replicates == Some(0) {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        for s in &self.scenarios {
            s.dgp.validate().map_err(cfg)?;
        }
        Ok(())
    }

    pub fn voting(&self) -> Result<VotingConfig> {
        let basis = self.basis.clone().ok_or_else(|| Error::Config("config needs a \"basis\"".into()))?;
        Ok(VotingConfig {
            basis,
            method: self.method,
            kernel: self.kernel,
            support: self.support,
            partial_out: self.partial_out,
        })
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloConfig> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("config needs \"scenarios\"".into()));
        }
        let mut bases = self.bases.clone();
        if bases.is_empty() {
            bases.extend(self.basis.clone());
        }
        let mut mc = MonteCarloConfig::new(self.scenarios.clone(), bases);
        if !self.methods.is_empty() {
            mc.methods = self.methods.clone();
        }
        mc.kernel = self.kernel;
        mc.support = self.support;
        mc.adjust_k = self.adjust_k;
        mc.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(mc)
    }
}

/// Numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot open {}: {e}", path.display())))?;
        CsvTable::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        let parse = |location: String, message: String| Error::Parse { location, message };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| parse(format!("{source}:1"), e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(parse(format!("{source}:1"), "missing header row".into()));
        }
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(parse(format!("{source}:1"), format!("duplicate column {h:?}")));
            }
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (r, record) in rdr.records().enumerate() {
            let line = r + 2;
            let record = record.map_err(|e| parse(format!("{source}:{line}"), e.to_string()))?;
            if record.len() != headers.len() {
                return Err(parse(
                    format!("{source}:{line}"),
                    format!("expected {} fields, found {}", headers.len(), record.len()),
                ));
            }
            for (c, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    parse(
                        format!("{source}:{line}, column {}", headers[c]),
                        format!("non-numeric value {cell:?}"),
                    )
                })?;
                columns[c].push(v);
            }
        }
        Ok(CsvTable { headers, columns })
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    fn require(&self, name: &str, source: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::Parse {
            location: format!("{source}:1"),
            message: format!("missing required column {name:?}"),
        })
    }

    /// Locations from the `s1`, `s2` columns. Coordinates outside the unit
    /// square are mapped into it by one common shift and scale, which keeps
    /// distances proportional.
    pub fn locations(&self, source: &str) -> Result<Vec<Point>> {
        let s1 = self.require("s1", source)?;
        let s2 = self.require("s2", source)?;
        check_finite(s1, "s1", source)?;
        check_finite(s2, "s2", source)?;
        let inside = |v: &[f64]| v.iter().all(|x| (0.0..=1.0).contains(x));
        if inside(s1) && inside(s2) {
            return Ok(s1.iter().zip(s2).map(|(&a, &b)| Point::new(a, b)).collect());
        }
        let range = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let (lo1, hi1) = range(s1);
        let (lo2, hi2) = range(s2);
        let scale = (hi1 - lo1).max(hi2 - lo2);
        if scale <= 0.0 {
            return Err(Error::Parse { location: source.into(), message: "all locations coincide".into() });
        }
        Ok(s1
            .iter()
            .zip(s2)
            .map(|(&a, &b)| Point::new(((a - lo1) / scale).clamp(0.0, 1.0), ((b - lo2) / scale).clamp(0.0, 1.0)))
            .collect())
    }

    /// Sample with `x` and `y` as exposure and outcome; every other column
    /// except `s1`, `s2` becomes a covariate, in header order.
    pub fn to_sample(&self, source: &str) -> Result<SpatialSample> {
        let locations = self.locations(source)?;
        let x = self.require("x", source)?;
        let y = self.require("y", source)?;
        check_finite(x, "x", source)?;
        check_finite(y, "y", source)?;
        let sample = SpatialSample::new(locations, x.to_vec(), y.to_vec())
            .map_err(|e| Error::Parse { location: source.into(), message: e.to_string() })?;
        let extra: Vec<usize> = (0..self.headers.len())
            .filter(|&i| !matches!(self.headers[i].as_str(), "s1" | "s2" | "x" | "y"))
            .collect();
        if extra.is_empty() {
            return Ok(sample);
        }
        for &c in &extra {
            check_finite(&self.columns[c], &self.headers[c], source)?;
        }
        let z = DMatrix::from_fn(self.rows(), extra.len(), |i, k| self.columns[extra[k]][i]);
        let names = extra.iter().map(|&c| self.headers[c].clone()).collect();
        sample
            .with_covariates(z, names)
            .map_err(|e| Error::Parse { location: source.into(), message: e.to_string() })
    }
}

fn check_finite(values: &[f64], name: &str, source: &str) -> Result<()> {
    let bad: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, _)| (i + 2).to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Parse {
            location: format!("{source}, column {name}"),
            message: format!("non-finite values on line(s) {}", bad.join(", ")),
        })
    }
}

/// Read a point-referenced dataset: columns `s1, s2, x, y`, plus covariates.
pub fn load_csv(path: &Path) -> Result<SpatialSample> {
    CsvTable::read(path)?.to_sample(&path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub command: String,
    /// Seconds since the Unix epoch; the only nondeterministic field.
    pub generated_at: u64,
}

impl Metadata {
    pub fn now(command: &str) -> Self {
        let generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Metadata { version: env!("CARGO_PKG_VERSION").to_string(), command: command.to_string(), generated_at }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub metadata: Metadata,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<CandidateSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_spectrum: Option<CoefficientSpectrum>,
    /// Baseline label to estimate (`None` when it failed).
    #[serde(default)]
    pub baselines: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryPoint>>,
    /// Free-form notes, e.g. baseline failure reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResultsReport {
    pub fn new(command: &str, config: RunConfig) -> Self {
        ResultsReport {
            metadata: Metadata::now(command),
            config,
            candidates: None,
            mode: None,
            exposure_spectrum: None,
            baselines: BTreeMap::new(),
            trajectory: None,
            notes: Vec::new(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut f = File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `replicate,seed,scenario,basis,method,estimate,truth`; failures are `NA`.
pub fn write_replicates_csv(path: &Path, rows: &[ReplicateResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["replicate", "seed", "scenario", "basis", "method", "estimate", "truth"]).map_err(csv_err)?;
    for row in rows {
        for (method, est) in &row.estimates {
            w.write_record([
                row.replicate.to_string(),
                row.seed.to_string(),
                row.scenario.clone(),
                row.basis.clone(),
                method.clone(),
                num(*est),
                row.truth.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `{key: {mean, bias, sd, rmse, failures, replicates}}`.
pub fn write_summary_json(path: &Path, summary: &MonteCarloSummary) -> Result<()> {
    write_json(path, summary)
}

/// `d,abs_mode,n_ratios,status`.
pub fn write_trajectory_csv(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["d", "abs_mode", "n_ratios", "status"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.d.to_string(), num(p.abs_mode), p.n_ratios.to_string(), p.status.clone()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `x,density`.
pub fn write_density_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "density"]).map_err(csv_err)?;
    for (x, f) in curve {
        w.write_record([x.to_string(), f.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `j,estimate,avar,alpha_x_hat` for kept candidates.
pub fn write_candidates_csv(path: &Path, set: &CandidateSet) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["j", "estimate", "avar", "alpha_x_hat"]).map_err(csv_err)?;
    for c in &set.candidates {
        w.write_record([c.j.to_string(), c.estimate.to_string(), c.avar.to_string(), c.alpha_x_hat.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSweepRow {
    pub bandwidth: f64,
    pub beta_hat: Option<f64>,
    pub n_candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DSweepRow {
    pub d: usize,
    pub beta_hat: Option<f64>,
    pub basis_adjust: Option<f64>,
    pub n_candidates: usize,
    pub status: String,
}

/// `bandwidth,beta_hat,n_candidates`.
pub fn write_bandwidth_sweep_csv(path: &Path, rows: &[BandwidthSweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["bandwidth", "beta_hat", "n_candidates"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.bandwidth.to_string(), num(r.beta_hat), r.n_candidates.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `d,beta_hat,basis_adjust,n_candidates,status`.
pub fn write_d_sweep_csv(path: &Path, rows: &[DSweepRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["d", "beta_hat", "basis_adjust", "n_candidates", "status"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.d.to_string(),
            num(r.beta_hat),
            num(r.basis_adjust),
            r.n_candidates.to_string(),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
