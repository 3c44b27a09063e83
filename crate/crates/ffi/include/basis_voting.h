#ifndef BASIS_VOTING_H
#define BASIS_VOTING_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BvKernel {
  BV_KERNEL_TRIANGULAR = 0,
  BV_KERNEL_EPANECHNIKOV = 1,
  BV_KERNEL_GAUSSIAN = 2,
} BvKernel;

typedef enum BvBasisFamily {
  BV_BASIS_FAMILY_FOURIER_TENSOR = 0,
  BV_BASIS_FAMILY_KERNEL_EIGEN = 1,
  BV_BASIS_FAMILY_RADIAL_SPLINE = 2,
} BvBasisFamily;

typedef enum BvMethod {
  BV_METHOD_PROJECTION = 0,
  BV_METHOD_DROP_ONE = 1,
} BvMethod;

/**
 * Evaluated basis over a sample's locations.
 */
typedef struct BvBasis BvBasis;

/**
 * Estimate, bandwidth and per-index candidates of one run.
 */
typedef struct BvResult BvResult;

/**
 * Locations with exposure and outcome.
 */
typedef struct BvSample BvSample;

typedef int32_t BvStatus;

/**
 * Kernel settings. `bandwidth <= 0` selects the automatic rule;
 * `grid_points == 0` selects the default grid.
 */
typedef struct BvKernelSpec {
  enum BvKernel kernel;
  double bandwidth;
  size_t grid_points;
} BvKernelSpec;

/**
 * Basis settings. Fields that do not apply to `family` are ignored; zero
 * selects the default for `max_frequency` and the Matérn parameters.
 */
typedef struct BvBasisSpec {
  enum BvBasisFamily family;
  size_t d;
  bool orthonormalize;
  uint32_t max_frequency;
  double matern_nu;
  double matern_range;
  double matern_variance;
} BvBasisSpec;

#define BV_OK 0

#define BV_ERR_NULL_POINTER 1

#define BV_ERR_INVALID_ARGUMENT 2

#define BV_ERR_RANK_DEFICIENT 3

#define BV_ERR_NO_SUPPORT 4

#define BV_ERR_NO_CANDIDATES 5

#define BV_ERR_NO_UNIQUE_MODE 6

#define BV_ERR_DEGENERATE 7

#define BV_ERR_IO 8

#define BV_ERR_PANIC 99

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *bv_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bv_version(void);

/**
 * Mode of the kernel density of `values[0..len]`.
 *
 * # Safety
 * `values` must point to `len` doubles; `kernel` and `out_mode` must be valid.
 */
BvStatus bv_kde_mode(const double *values,
                     size_t len,
                     const struct BvKernelSpec *kernel,
                     double *out_mode,
                     double *out_bandwidth);

/**
 * Bandwidth bound for exact plurality-mode recovery; `+inf` when all
 * values are equal. Only compact kernels are accepted.
 *
 * # Safety
 * `values` must point to `len` doubles; `out_h0` must be valid.
 */
BvStatus bv_compute_h0(const double *values, size_t len, enum BvKernel kernel, double *out_h0);

/**
 * Build a sample from `n` locations `(s1[i], s2[i])` with exposure `x` and
 * outcome `y`.
 *
 * # Safety
 * The four arrays must hold `n` doubles; `out` must be valid.
 */
BvStatus bv_sample_new(const double *s1,
                       const double *s2,
                       const double *x,
                       const double *y,
                       size_t n,
                       struct BvSample **out);

/**
 * # Safety
 * `sample` must come from `bv_sample_new` and not be used afterwards.
 */
void bv_sample_free(struct BvSample *sample);

/**
 * Evaluate a basis at the sample's locations.
 *
 * # Safety
 * `sample`, `spec` and `out` must be valid.
 */
BvStatus bv_basis_build(const struct BvSample *sample,
                        const struct BvBasisSpec *spec,
                        struct BvBasis **out);

/**
 * Number of functions in the basis (0 for NULL).
 *
 * # Safety
 * `basis` must be NULL or valid.
 */
size_t bv_basis_dim(const struct BvBasis *basis);

/**
 * Largest `|H^T H / n - I|` entry of the basis.
 *
 * # Safety
 * `basis` and `out` must be valid.
 */
BvStatus bv_basis_gram_deviation(const struct BvBasis *basis, double *out);

/**
 * # Safety
 * `basis` must come from `bv_basis_build` and not be used afterwards.
 */
void bv_basis_free(struct BvBasis *basis);

/**
 * The constant `c*` of the basis.
 *
 * # Safety
 * `basis` and `out` must be valid.
 */
BvStatus bv_c_star(const struct BvBasis *basis, double *out);

/**
 * Basis-voting estimate on a built basis, with the default relative 1%
 * support rule. No covariate adjustment is applied.
 *
 * # Safety
 * `sample`, `basis`, `kernel` and `out` must be valid; `basis` must have
 * been built over `sample`'s locations.
 */
BvStatus bv_estimate(const struct BvSample *sample,
                     const struct BvBasis *basis,
                     enum BvMethod method,
                     const struct BvKernelSpec *kernel,
                     struct BvResult **out);

/**
 * Point estimate (NaN for NULL).
 *
 * # Safety
 * `result` must be NULL or valid.
 */
double bv_result_beta_hat(const struct BvResult *result);

/**
 * Bandwidth used by the mode search (NaN for NULL).
 *
 * # Safety
 * `result` must be NULL or valid.
 */
double bv_result_bandwidth(const struct BvResult *result);

/**
 * Number of candidates that entered the vote (0 for NULL).
 *
 * # Safety
 * `result` must be NULL or valid.
 */
size_t bv_result_candidate_count(const struct BvResult *result);

/**
 * Copy up to `capacity` candidates into the given arrays; any of them may
 * be NULL to skip that field. `out_written` receives the number copied.
 *
 * # Safety
 * Non-NULL arrays must hold `capacity` elements; `result` must be valid.
 */
BvStatus bv_result_candidates(const struct BvResult *result,
                              size_t *indices,
                              double *estimates,
                              double *avars,
                              size_t capacity,
                              size_t *out_written);

/**
 * # Safety
 * `result` must come from `bv_estimate` and not be used afterwards.
 */
void bv_result_free(struct BvResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BASIS_VOTING_H */
