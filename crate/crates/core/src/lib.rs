//! Basis voting: plurality-rule estimation of an exposure effect under
//! unmeasured spatial confounding.
//!
//! The pipeline expands the exposure in a spatial basis, forms one effect
//! estimate per basis function that carries exposure signal, and reports the
//! kernel-density mode of those estimates.

pub mod bases;
pub mod candidates;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mode;
pub mod sample;
pub mod simulation;
pub mod spectra;
pub mod voting;

pub use bases::{build_basis, c_star, generate_locations, BasisFamily, BasisMatrix, BasisSpec, LocationDesign};
pub use candidates::{
    avar_compare, drop_one_candidates, partial_out, projection_candidates, AvarSource, CandidateEstimate,
    CandidateMethod, CandidateSet, SkippedCandidate,
};
pub use error::{Error, Result};
pub use mode::{compute_h0, kde_eval, kde_mode, Bandwidth, KernelKind, KernelSpec, ModeEstimate};
pub use sample::{Point, SpatialSample};
pub use simulation::{
    basis_adjust_baseline, gen_dgp, ols_baseline, run_monte_carlo, scenario, DgpConfig, Method, MonteCarloConfig,
    MonteCarloRun, Scenario,
};
pub use spectra::{project, ratio_set, support_set, CoefficientSpectrum, RatioSet, SupportRule};
pub use voting::{basis_voting, vote_with_basis, VotingConfig, VotingResult};
