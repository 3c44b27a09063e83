//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bases::{build_basis, BasisSweep};
use crate::candidates::{candidates_with, partial_out, AvarSource};
use crate::error::{Error, Result};
use crate::io::{
    load_csv, write_bandwidth_sweep_csv, write_candidates_csv, write_d_sweep_csv, write_density_csv, write_json,
    write_replicates_csv, write_summary_json, write_trajectory_csv, BandwidthSweepRow, CsvTable, DSweepRow,
    ResultsReport, RunConfig,
};
use crate::mode::{kde_mode, Bandwidth, KernelSpec};
use crate::sample::SpatialSample;
use crate::simulation::{basis_adjust_baseline, ols_baseline, run_monte_carlo};
use crate::spectra::{ratio_mode_trajectory, CoefficientSpectrum};
use crate::voting::{basis_voting, vote_with_basis};

#[derive(Debug, Parser)]
#[command(name = "basis-voting", version, about = "Basis-voting estimation under spatial confounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo experiments over scenarios, bases and methods.
    Simulate(SimulateArgs),
    /// Basis-voting estimate and baselines on a dataset.
    Estimate(EstimateArgs),
    /// Ratio-mode trajectory of two columns over basis sizes.
    Diagnose(DiagnoseArgs),
    /// Estimates over bandwidths and/or basis sizes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Analyze log(y + offset) instead of y.
    #[arg(long)]
    log_offset: Option<f64>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    /// Numerator field of the ratios.
    #[arg(long)]
    field_a: String,
    /// Denominator field; it also defines the support set.
    #[arg(long)]
    field_b: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("axis").required(true).multiple(true).args(["bandwidths", "d_values"]))]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// e.g. `0.01,0.05,0.1` or `0.05..0.5:0.05`.
    #[arg(long)]
    bandwidths: Option<String>,
    /// e.g. `150,250` or `150..850:100` or `150..850 step 100`.
    #[arg(long)]
    d_values: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Parse a list of numbers: comma-separated items, each a number or an
/// inclusive range `a..b`, `a..b:step` or `a..b step s`.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::Config(format!("invalid list {text:?}: {msg}"));
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let item = item.replace(" step ", ":");
        let Some((a, rest)) = item.split_once("..") else {
            out.push(item.parse::<f64>().map_err(|e| bad(e.to_string()))?);
            continue;
        };
        let rest = rest.trim_start_matches('=');
        let (b, step) = match rest.split_once(':') {
            Some((b, s)) => (b, Some(s)),
            None => (rest, None),
        };
        let a: f64 = a.trim().parse().map_err(|_| bad(format!("bad range start {a:?}")))?;
        let b: f64 = b.trim().parse().map_err(|_| bad(format!("bad range end {b:?}")))?;
        let step: f64 = match step {
            Some(s) => s.trim().parse().map_err(|_| bad(format!("bad step {s:?}")))?,
            None => 1.0,
        };
        if !(step > 0.0) || b < a {
            return Err(bad("ranges need a <= b and a positive step".into()));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        out.extend((0..=count).map(|k| a + k as f64 * step));
    }
    if out.is_empty() {
        return Err(bad("empty".into()));
    }
    Ok(out)
}

fn parse_d_values(text: &str) -> Result<Vec<usize>> {
    parse_list(text)?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("d values must be positive integers, got {v}")))
            }
        })
        .collect()
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if args.replicates.is_some() {
        config.replicates = args.replicates;
    }
    if args.seed.is_some() {
        config.seed = args.seed;
    }
    config.out = Some(args.out.display().to_string());
    let replicates = config.replicates.ok_or_else(|| Error::Config("--replicates is required".into()))?;
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let seed = config.seed.unwrap_or(0);
    let mc = config.monte_carlo()?;
    let run = run_monte_carlo(&mc, replicates, seed)?;
    prepare_out(&args.out)?;
    write_replicates_csv(&args.out.join("replicates.csv"), &run.replicates)?;
    write_summary_json(&args.out.join("summary.json"), &run.summary)?;
    let mut report = ResultsReport::new("simulate", config);
    report.notes.push(format!("{} replicate rows", run.replicates.len()));
    write_json(&args.out.join("config.json"), &report)?;
    Ok(())
}

fn load_sample(data: &Path, log_offset: Option<f64>) -> Result<SpatialSample> {
    let sample = load_csv(data)?;
    let Some(offset) = log_offset else {
        return Ok(sample);
    };
    if let Some(i) = sample.outcome().iter().position(|y| y + offset <= 0.0) {
        return Err(Error::Parse {
            location: format!("{}:{}, column y", data.display(), i + 2),
            message: format!("y + offset = {} is not positive", sample.outcome()[i] + offset),
        });
    }
    sample.map_outcome(|y| (y + offset).ln())
}

fn baselines(report: &mut ResultsReport, sample: &SpatialSample, config: &RunConfig) {
    let mut record = |name: &str, r: Result<f64>| match r {
        Ok(v) => {
            report.baselines.insert(name.into(), Some(v));
        }
        Err(e) => {
            report.baselines.insert(name.into(), None);
            report.notes.push(format!("{name}: {e}"));
        }
    };
    record("ols", ols_baseline(sample));
    let adjust = config.voting().and_then(|v| {
        let basis = build_basis(&v.basis, sample.locations())?;
        basis_adjust_baseline(sample, &basis, config.adjust_k.min(basis.d()))
    });
    record("basis-adjust", adjust);
}

fn maybe_partial_out(sample: SpatialSample, config: &RunConfig) -> Result<SpatialSample> {
    if config.partial_out && sample.covariates().is_some() {
        partial_out(&sample)
    } else {
        Ok(sample)
    }
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    config.data = Some(args.data.display().to_string());
    config.out = Some(args.out.display().to_string());
    let voting = config.voting()?;
    let sample = load_sample(&args.data, args.log_offset)?;
    let result = basis_voting(&sample, &voting)?;
    let analyzed = maybe_partial_out(sample, &config)?;
    prepare_out(&args.out)?;
    write_density_csv(&args.out.join("density.csv"), &result.mode.density_curve)?;
    write_candidates_csv(&args.out.join("candidates.csv"), &result.candidates)?;
    let mut report = ResultsReport::new("estimate", config.clone());
    if let Some(offset) = args.log_offset {
        report.notes.push(format!("outcome analyzed as log(y + {offset})"));
    }
    baselines(&mut report, &analyzed, &config);
    report.candidates = Some(result.candidates);
    report.exposure_spectrum = Some(result.exposure_spectrum);
    report.mode = Some(result.mode);
    write_json(&args.out.join("report.json"), &report)?;
    Ok(())
}

fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    config.data = Some(args.data.display().to_string());
    config.out = Some(args.out.display().to_string());
    let template = config.basis.clone().ok_or_else(|| Error::Config("config needs a \"basis\"".into()))?;
    if config.d_values.is_empty() {
        return Err(Error::Config("config needs \"d_values\"".into()));
    }
    let source = args.data.display().to_string();
    let table = CsvTable::read(&args.data)?;
    let locations = table.locations(&source)?;
    let column = |name: &str| {
        table.column(name).map(<[f64]>::to_vec).ok_or_else(|| Error::Parse {
            location: format!("{source}:1"),
            message: format!("missing column {name:?}"),
        })
    };
    let a = column(&args.field_a)?;
    let b = column(&args.field_b)?;
    let points = ratio_mode_trajectory(&a, &b, &locations, &template, &config.d_values, &config.kernel, &config.support)?;
    prepare_out(&args.out)?;
    write_trajectory_csv(&args.out.join("trajectory.csv"), &points)?;
    let mut report = ResultsReport::new("diagnose", config);
    report.notes.push(format!("ratios of {} over {}", args.field_a, args.field_b));
    report.trajectory = Some(points);
    write_json(&args.out.join("report.json"), &report)?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    config.data = Some(args.data.display().to_string());
    config.out = Some(args.out.display().to_string());
    let voting = config.voting()?;
    let sample = maybe_partial_out(load_csv(&args.data)?, &config)?;
    prepare_out(&args.out)?;
    let mut report = ResultsReport::new("sweep", config.clone());

    if let Some(list) = &args.bandwidths {
        let hs = parse_list(list)?;
        let basis = build_basis(&voting.basis, sample.locations())?;
        let spectrum = CoefficientSpectrum::compute(sample.exposure(), &basis, &voting.support, "x")?;
        let set = candidates_with(voting.method, &sample, &basis, &spectrum.support, &AvarSource::Proxy)?;
        let estimates = set.estimates();
        let mut rows = Vec::with_capacity(hs.len());
        for h in hs {
            let spec = KernelSpec { bandwidth: Bandwidth::Fixed(h), ..voting.kernel };
            let beta_hat = match kde_mode(&estimates, &spec) {
                Ok(m) => Some(m.beta_hat),
                Err(e) => {
                    report.notes.push(format!("bandwidth {h}: {e}"));
                    None
                }
            };
            rows.push(BandwidthSweepRow { bandwidth: h, beta_hat, n_candidates: estimates.len() });
        }
        write_bandwidth_sweep_csv(&args.out.join("sweep_bandwidth.csv"), &rows)?;
    }
    if let Some(list) = &args.d_values {
        let ds = parse_d_values(list)?;
        if ds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("d values must be strictly increasing".into()));
        }
        let sweep = BasisSweep::new(&voting.basis, sample.locations(), *ds.last().expect("non-empty"))?;
        let mut rows = Vec::with_capacity(ds.len());
        for d in ds {
            let row = match sweep.basis(d) {
                Ok(basis) => {
                    let vote = vote_with_basis(
                        &sample,
                        &basis,
                        voting.method,
                        &voting.kernel,
                        &voting.support,
                        &AvarSource::Proxy,
                    );
                    let adjust = basis_adjust_baseline(&sample, &basis, config.adjust_k.min(d)).ok();
                    match vote {
                        Ok(v) => DSweepRow {
                            d,
                            beta_hat: Some(v.mode.beta_hat),
                            basis_adjust: adjust,
                            n_candidates: v.candidates.candidates.len(),
                            status: "ok".into(),
                        },
                        Err(e) => DSweepRow {
                            d,
                            beta_hat: None,
                            basis_adjust: adjust,
                            n_candidates: 0,
                            status: format!("{}: {e}", e.kind()),
                        },
                    }
                }
                Err(e) => DSweepRow {
                    d,
                    beta_hat: None,
                    basis_adjust: None,
                    n_candidates: 0,
                    status: format!("{}: {e}", e.kind()),
                },
            };
            rows.push(row);
        }
        write_d_sweep_csv(&args.out.join("sweep_d.csv"), &rows)?;
    }
    write_json(&args.out.join("report.json"), &report)?;
    Ok(())
}

fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": e.exit_code(),
    })
    .to_string()
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code. Errors are written to stderr as one JSON object.
pub fn run_subcommand<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_forms() {
        assert_eq!(parse_list("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_d_values("150..850:100").unwrap(), vec![150, 250, 350, 450, 550, 650, 750, 850]);
        assert_eq!(parse_d_values("150..850 step 100").unwrap().len(), 8);
        assert_eq!(parse_d_values("1..3").unwrap(), vec![1, 2, 3]);
        assert!(parse_list("").is_err());
        assert!(parse_list("3..1").is_err());
        assert!(parse_d_values("2.5").is_err());
    }
}
