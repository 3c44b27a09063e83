//! C ABI over the basis-voting estimator.
//!
//! Every fallible function returns a `BvStatus`; on failure the message is
//! available from `bv_last_error_message` on the same thread. Handles are
//! opaque and must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use basis_voting::{
    build_basis, c_star, compute_h0, kde_mode, vote_with_basis, AvarSource, Bandwidth, BasisFamily, BasisMatrix,
    BasisSpec, CandidateMethod, Error, KernelKind, KernelSpec, Point, SpatialSample, SupportRule, VotingResult,
};
use basis_voting::bases::MaternParams;
use basis_voting::mode::DEFAULT_GRID_POINTS;

pub type BvStatus = i32;

pub const BV_OK: BvStatus = 0;
pub const BV_ERR_NULL_POINTER: BvStatus = 1;
pub const BV_ERR_INVALID_ARGUMENT: BvStatus = 2;
pub const BV_ERR_RANK_DEFICIENT: BvStatus = 3;
pub const BV_ERR_NO_SUPPORT: BvStatus = 4;
pub const BV_ERR_NO_CANDIDATES: BvStatus = 5;
pub const BV_ERR_NO_UNIQUE_MODE: BvStatus = 6;
pub const BV_ERR_DEGENERATE: BvStatus = 7;
pub const BV_ERR_IO: BvStatus = 8;
pub const BV_ERR_PANIC: BvStatus = 99;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvKernel {
    Triangular = 0,
    Epanechnikov = 1,
    Gaussian = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvBasisFamily {
    FourierTensor = 0,
    KernelEigen = 1,
    RadialSpline = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvMethod {
    Projection = 0,
    DropOne = 1,
}

/// Kernel settings. `bandwidth <= 0` selects the automatic rule;
/// `grid_points == 0` selects the default grid.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BvKernelSpec {
    pub kernel: BvKernel,
    pub bandwidth: f64,
    pub grid_points: usize,
}

/// Basis settings. Fields that do not apply to `family` are ignored; zero
/// selects the default for `max_frequency` and the Matérn parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BvBasisSpec {
    pub family: BvBasisFamily,
    pub d: usize,
    pub orthonormalize: bool,
    pub max_frequency: u32,
    pub matern_nu: f64,
    pub matern_range: f64,
    pub matern_variance: f64,
}

/// Locations with exposure and outcome.
pub struct BvSample(SpatialSample);

/// Evaluated basis over a sample's locations.
pub struct BvBasis(BasisMatrix);

/// Estimate, bandwidth and per-index candidates of one run.
pub struct BvResult(VotingResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BvStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => BV_ERR_INVALID_ARGUMENT,
        Error::RankDeficient { .. } => BV_ERR_RANK_DEFICIENT,
        Error::NoSupport => BV_ERR_NO_SUPPORT,
        Error::NoCandidates { .. } => BV_ERR_NO_CANDIDATES,
        Error::NoUniqueMode => BV_ERR_NO_UNIQUE_MODE,
        Error::Degenerate(_) => BV_ERR_DEGENERATE,
        Error::Parse { .. } | Error::Io(_) => BV_ERR_IO,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            BV_OK
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            BV_ERR_NULL_POINTER
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BV_ERR_PANIC
        }
    }
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn kernel_kind(k: BvKernel) -> KernelKind {
    match k {
        BvKernel::Triangular => KernelKind::Triangular,
        BvKernel::Epanechnikov => KernelKind::Epanechnikov,
        BvKernel::Gaussian => KernelKind::Gaussian,
    }
}

fn kernel_spec(k: &BvKernelSpec) -> KernelSpec {
    KernelSpec {
        kernel: kernel_kind(k.kernel),
        bandwidth: if k.bandwidth > 0.0 { Bandwidth::Fixed(k.bandwidth) } else { Bandwidth::Auto },
        grid_points: if k.grid_points == 0 { DEFAULT_GRID_POINTS } else { k.grid_points },
    }
}

fn basis_spec(b: &BvBasisSpec) -> BasisSpec {
    let family = match b.family {
        BvBasisFamily::FourierTensor => BasisFamily::FourierTensor,
        BvBasisFamily::KernelEigen => BasisFamily::KernelEigen,
        BvBasisFamily::RadialSpline => BasisFamily::RadialSpline,
    };
    let mut spec = BasisSpec::new(family, b.d);
    spec.orthonormalize = b.orthonormalize;
    if b.max_frequency > 0 {
        spec.max_frequency = b.max_frequency;
    }
    let defaults = MaternParams::default();
    let pick = |v: f64, d: f64| if v == 0.0 { d } else { v };
    spec.matern = MaternParams {
        nu: pick(b.matern_nu, defaults.nu),
        range: pick(b.matern_range, defaults.range),
        variance: pick(b.matern_variance, defaults.variance),
    };
    spec
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bv_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Mode of the kernel density of `values[0..len]`.
///
/// # Safety
/// `values` must point to `len` doubles; `kernel` and `out_mode` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_kde_mode(
    values: *const f64,
    len: usize,
    kernel: *const BvKernelSpec,
    out_mode: *mut f64,
    out_bandwidth: *mut f64,
) -> BvStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        let spec = kernel_spec(ref_arg(kernel, "kernel")?);
        let out = out_arg(out_mode, "out_mode")?;
        let m = kde_mode(values, &spec)?;
        *out = m.beta_hat;
        if let Some(h) = out_bandwidth.as_mut() {
            *h = m.bandwidth;
        }
        Ok(())
    })
}

/// Bandwidth bound for exact plurality-mode recovery; `+inf` when all
/// values are equal. Only compact kernels are accepted.
///
/// # Safety
/// `values` must point to `len` doubles; `out_h0` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_compute_h0(values: *const f64, len: usize, kernel: BvKernel, out_h0: *mut f64) -> BvStatus {
    guard(|| {
        let values = slice_arg(values, len, "values")?;
        let out = out_arg(out_h0, "out_h0")?;
        *out = compute_h0(values, kernel_kind(kernel))?;
        Ok(())
    })
}

/// Build a sample from `n` locations `(s1[i], s2[i])` with exposure `x` and
/// outcome `y`.
///
/// # Safety
/// The four arrays must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_sample_new(
    s1: *const f64,
    s2: *const f64,
    x: *const f64,
    y: *const f64,
    n: usize,
    out: *mut *mut BvSample,
) -> BvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s1 = slice_arg(s1, n, "s1")?;
        let s2 = slice_arg(s2, n, "s2")?;
        let x = slice_arg(x, n, "x")?;
        let y = slice_arg(y, n, "y")?;
        let locs = s1.iter().zip(s2).map(|(&a, &b)| Point::new(a, b)).collect();
        let sample = SpatialSample::new(locs, x.to_vec(), y.to_vec())?;
        *out = Box::into_raw(Box::new(BvSample(sample)));
        Ok(())
    })
}

/// # Safety
/// `sample` must come from `bv_sample_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bv_sample_free(sample: *mut BvSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Evaluate a basis at the sample's locations.
///
/// # Safety
/// `sample`, `spec` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_basis_build(
    sample: *const BvSample,
    spec: *const BvBasisSpec,
    out: *mut *mut BvBasis,
) -> BvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sample = ref_arg(sample, "sample")?;
        let spec = basis_spec(ref_arg(spec, "spec")?);
        let basis = build_basis(&spec, sample.0.locations())?;
        *out = Box::into_raw(Box::new(BvBasis(basis)));
        Ok(())
    })
}

/// Number of functions in the basis (0 for NULL).
///
/// # Safety
/// `basis` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn bv_basis_dim(basis: *const BvBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.d())
}

/// Largest `|H^T H / n - I|` entry of the basis.
///
/// # Safety
/// `basis` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_basis_gram_deviation(basis: *const BvBasis, out: *mut f64) -> BvStatus {
    guard(|| {
        let b = ref_arg(basis, "basis")?;
        *out_arg(out, "out")? = b.0.gram_deviation();
        Ok(())
    })
}

/// # Safety
/// `basis` must come from `bv_basis_build` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bv_basis_free(basis: *mut BvBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// The constant `c*` of the basis.
///
/// # Safety
/// `basis` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_c_star(basis: *const BvBasis, out: *mut f64) -> BvStatus {
    guard(|| {
        let b = ref_arg(basis, "basis")?;
        let out = out_arg(out, "out")?;
        *out = c_star(&b.0)?;
        Ok(())
    })
}

/// Basis-voting estimate on a built basis, with the default relative 1%
/// support rule. No covariate adjustment is applied.
///
/// # Safety
/// `sample`, `basis`, `kernel` and `out` must be valid; `basis` must have
/// been built over `sample`'s locations.
#[no_mangle]
pub unsafe extern "C" fn bv_estimate(
    sample: *const BvSample,
    basis: *const BvBasis,
    method: BvMethod,
    kernel: *const BvKernelSpec,
    out: *mut *mut BvResult,
) -> BvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sample = ref_arg(sample, "sample")?;
        let basis = ref_arg(basis, "basis")?;
        let kernel = kernel_spec(ref_arg(kernel, "kernel")?);
        let method = match method {
            BvMethod::Projection => CandidateMethod::Projection,
            BvMethod::DropOne => CandidateMethod::DropOne,
        };
        let r = vote_with_basis(&sample.0, &basis.0, method, &kernel, &SupportRule::default(), &AvarSource::Proxy)?;
        *out = Box::into_raw(Box::new(BvResult(r)));
        Ok(())
    })
}

/// Point estimate (NaN for NULL).
///
/// # Safety
/// `result` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn bv_result_beta_hat(result: *const BvResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.mode.beta_hat)
}

/// Bandwidth used by the mode search (NaN for NULL).
///
/// # Safety
/// `result` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn bv_result_bandwidth(result: *const BvResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.mode.bandwidth)
}

/// Number of candidates that entered the vote (0 for NULL).
///
/// # Safety
/// `result` must be NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn bv_result_candidate_count(result: *const BvResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.candidates.candidates.len())
}

/// Copy up to `capacity` candidates into the given arrays; any of them may
/// be NULL to skip that field. `out_written` receives the number copied.
///
/// # Safety
/// Non-NULL arrays must hold `capacity` elements; `result` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bv_result_candidates(
    result: *const BvResult,
    indices: *mut usize,
    estimates: *mut f64,
    avars: *mut f64,
    capacity: usize,
    out_written: *mut usize,
) -> BvStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let cands = &r.0.candidates.candidates;
        let k = cands.len().min(capacity);
        for (i, c) in cands.iter().take(k).enumerate() {
            if !indices.is_null() {
                *indices.add(i) = c.j;
            }
            if !estimates.is_null() {
                *estimates.add(i) = c.estimate;
            }
            if !avars.is_null() {
                *avars.add(i) = c.avar;
            }
        }
        if let Some(w) = out_written.as_mut() {
            *w = k;
        }
        Ok(())
    })
}

/// # Safety
/// `result` must come from `bv_estimate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bv_result_free(result: *mut BvResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
