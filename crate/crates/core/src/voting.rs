//! The end-to-end basis-voting estimator: build the basis, find the exposure
//! support, compute candidates and take their KDE mode.

use serde::{Deserialize, Serialize};

use crate::bases::{build_basis, BasisMatrix, BasisSpec};
use crate::candidates::{candidates_with, partial_out, AvarSource, CandidateMethod, CandidateSet};
use crate::error::Result;
use crate::mode::{kde_mode, KernelSpec, ModeEstimate};
use crate::sample::SpatialSample;
use crate::spectra::{CoefficientSpectrum, SupportRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VotingConfig {
    pub basis: BasisSpec,
    #[serde(default = "default_method")]
    pub method: CandidateMethod,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub support: SupportRule,
    /// Residualize on the covariates first, when the sample has any.
    #[serde(default = "default_true")]
    pub partial_out: bool,
}

fn default_method() -> CandidateMethod {
    CandidateMethod::DropOne
}

fn default_true() -> bool {
    true
}

impl VotingConfig {
    pub fn new(basis: BasisSpec, method: CandidateMethod) -> Self {
        VotingConfig {
            basis,
            method,
            kernel: KernelSpec::default(),
            support: SupportRule::default(),
            partial_out: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingResult {
    pub mode: ModeEstimate,
    pub candidates: CandidateSet,
    pub exposure_spectrum: CoefficientSpectrum,
}

/// Run the full pipeline on `sample`.
pub fn basis_voting(sample: &SpatialSample, config: &VotingConfig) -> Result<VotingResult> {
    config.kernel.validate()?;
    config.support.validate()?;
    let owned;
    let sample = if config.partial_out && sample.covariates().is_some() {
        owned = partial_out(sample)?;
        &owned
    } else {
        sample
    };
    let basis = build_basis(&config.basis, sample.locations())?;
    vote_with_basis(sample, &basis, config.method, &config.kernel, &config.support, &AvarSource::Proxy)
}

/// Voting on an already built basis; no partial-out.
pub fn vote_with_basis(
    sample: &SpatialSample,
    basis: &BasisMatrix,
    method: CandidateMethod,
    kernel: &KernelSpec,
    support: &SupportRule,
    source: &AvarSource,
) -> Result<VotingResult> {
    let exposure_spectrum = CoefficientSpectrum::compute(sample.exposure(), basis, support, "x")?;
    let candidates = candidates_with(method, sample, basis, &exposure_spectrum.support, source)?;
    let mut mode = kde_mode(&candidates.estimates(), kernel)?;
    mode.skipped = candidates.skipped.clone();
    Ok(VotingResult { mode, candidates, exposure_spectrum })
}
