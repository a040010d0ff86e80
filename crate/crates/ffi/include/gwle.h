#ifndef GWLE_H
#define GWLE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum GwleStatus {
  GWLE_STATUS_OK = 0,
  GWLE_STATUS_NULL_POINTER = 1,
  GWLE_STATUS_INVALID_ARGUMENT = 2,
  GWLE_STATUS_DIMENSION_MISMATCH = 3,
  GWLE_STATUS_SINGULAR_FIT = 4,
  GWLE_STATUS_INSUFFICIENT_SUPPORT = 5,
  GWLE_STATUS_NUMERICAL_FAILURE = 6,
  GWLE_STATUS_PANIC = 7,
} GwleStatus;

typedef enum GwleKernel {
  GWLE_KERNEL_GAUSSIAN = 0,
  GWLE_KERNEL_EPANECHNIKOV = 1,
  GWLE_KERNEL_QUARTIC = 2,
} GwleKernel;

/**
 * Opaque dataset handle.
 */
typedef struct GwleDataset GwleDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a dataset of `n` records on a lattice with `m` axes.
 *
 * `lattice_sizes`: m values. `indices`: n×m one-based lattice coordinates.
 * `x`: n×p covariates. `u`: n×d locations. `y`: n responses. On success
 * `*out` receives a handle owned by the caller.
 *
 * # Safety
 * All pointers must be valid for the stated lengths; `out` must be writable.
 */
enum GwleStatus gwle_dataset_new(const size_t *lattice_sizes,
                                 size_t m,
                                 size_t p,
                                 size_t d,
                                 bool intercept,
                                 size_t n,
                                 const size_t *indices,
                                 const double *x,
                                 const double *u,
                                 const double *y,
                                 struct GwleDataset **out);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle from [`gwle_dataset_new`], freed at most once.
 */
void gwle_dataset_free(struct GwleDataset *ds);

/**
 * Number of records.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum GwleStatus gwle_dataset_len(const struct GwleDataset *ds, size_t *out);

/**
 * Checks lattice coverage, dimensions and finiteness. `*violations`
 * receives the number of problems found; the first is available from
 * [`gwle_last_error_message`] when nonzero.
 *
 * # Safety
 * `ds` must be a live handle; `violations` must be writable.
 */
enum GwleStatus gwle_dataset_validate(const struct GwleDataset *ds, size_t *violations);

/**
 * Local GWLE fit at `u0`.
 *
 * `u0`, `scales`: d values. `beta_out`: p values. `grad_out`: d×p values,
 * row s holding ∂β/∂u_s. `effective_n` and `ridge_applied` may be null.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum GwleStatus gwle_fit_local(const struct GwleDataset *ds,
                               const double *u0,
                               size_t d,
                               enum GwleKernel kernel,
                               const double *scales,
                               double h,
                               double ridge,
                               double *beta_out,
                               double *grad_out,
                               double *effective_n,
                               bool *ridge_applied);

/**
 * Product-kernel local linear fit with per-dimension bandwidths (d values).
 * Output layout as in [`gwle_fit_local`].
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum GwleStatus gwle_mlwe_fit_local(const struct GwleDataset *ds,
                                    const double *u0,
                                    size_t d,
                                    enum GwleKernel kernel,
                                    const double *bandwidths,
                                    double ridge,
                                    double *beta_out,
                                    double *grad_out);

/**
 * κ₀..κ₄ of the one-dimensional kernel into `out` (5 values).
 *
 * # Safety
 * `out` must be writable for 5 values.
 */
enum GwleStatus gwle_kernel_moments(enum GwleKernel kernel, double *out);

/**
 * Scaled distance `|Λ(a - b)|` between two d-vectors.
 *
 * # Safety
 * `a`, `b`, `scales` must hold d values; `out` must be writable.
 */
enum GwleStatus gwle_distance(const double *a,
                              const double *b,
                              const double *scales,
                              size_t d,
                              double *out);

/**
 * Message of the most recent failure on this thread, or "" if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *gwle_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *gwle_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GWLE_H */
