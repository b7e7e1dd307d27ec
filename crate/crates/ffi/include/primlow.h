#ifndef PRIMLOW_H
#define PRIMLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum PrimlowStatus {
  PRIMLOW_STATUS_OK = 0,
  PRIMLOW_STATUS_NULL_POINTER = 1,
  PRIMLOW_STATUS_INVALID_ARGUMENT = 2,
  PRIMLOW_STATUS_INVALID_PARAMS = 3,
  PRIMLOW_STATUS_INADMISSIBLE = 4,
  PRIMLOW_STATUS_VACUUM = 5,
  PRIMLOW_STATUS_NO_CONTRACTION = 6,
  PRIMLOW_STATUS_BLOW_UP = 7,
  PRIMLOW_STATUS_BOUNDARY_VIOLATION = 8,
  PRIMLOW_STATUS_DEGENERATE_FIT = 9,
  PRIMLOW_STATUS_INTERNAL = 10,
} PrimlowStatus;

/**
 * Which field to copy out of a solver.
 */
typedef enum PrimlowField {
  /**
   * z-independent density fluctuation, `nx * ny` values.
   */
  PRIMLOW_FIELD_R = 0,
  PRIMLOW_FIELD_U1 = 1,
  PRIMLOW_FIELD_U2 = 2,
  PRIMLOW_FIELD_W = 3,
  PRIMLOW_FIELD_RHO = 4,
} PrimlowField;

/**
 * Opaque compressible solver.
 */
typedef struct PrimlowSolver PrimlowSolver;

/**
 * Non-dimensional constants, mirrored field for field.
 */
typedef struct PrimlowParams {
  double gamma;
  double theta;
  double kappa;
  double delta;
  /**
   * Rossby number; infinity disables rotation.
   */
  double ro;
  double mu;
  double nu;
} PrimlowParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t primlow_last_error(char *buf, size_t len);

/**
 * Fill `out` with the default constants.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `PrimlowParams`.
 */
enum PrimlowStatus primlow_params_default(struct PrimlowParams *out);

/**
 * Create a solver on an `nx x ny x nz` grid.
 *
 * `r0` holds `nx * ny` values, `u1` and `u2` hold `nx * ny * nz` values in
 * (k, j, i) order; any of them may be null for zero. The initial data must
 * pass the admissibility gates.
 *
 * # Safety
 * Non-null arrays must hold the stated number of values; `params` and
 * `out` must be valid.
 */
enum PrimlowStatus primlow_solver_new(const struct PrimlowParams *params,
                                      size_t nx,
                                      size_t ny,
                                      size_t nz,
                                      const double *r0,
                                      const double *u1,
                                      const double *u2,
                                      struct PrimlowSolver **out);

/**
 * Release a solver; null is ignored.
 *
 * # Safety
 * `h` must be null or a handle from [`primlow_solver_new`] not yet freed.
 */
void primlow_solver_free(struct PrimlowSolver *h);

/**
 * Take `n` steps at the stable time step.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum PrimlowStatus primlow_solver_step(struct PrimlowSolver *h, size_t n);

/**
 * Advance until `t_end`, landing on it exactly.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum PrimlowStatus primlow_solver_advance_to(struct PrimlowSolver *h, double t_end);

/**
 * Current time.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum PrimlowStatus primlow_solver_time(const struct PrimlowSolver *h, double *out);

/**
 * `(1/2) int rho |u|^2` plus the scaled relative entropy.
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
enum PrimlowStatus primlow_solver_energy(const struct PrimlowSolver *h, double *out);

/**
 * Copy a field into `buf`, which must hold exactly its value count
 * (`nx * ny` for `R`, `nx * ny * nz` otherwise).
 *
 * # Safety
 * `h` must be a live handle and `buf` writable for `len` values.
 */
enum PrimlowStatus primlow_solver_copy_field(const struct PrimlowSolver *h,
                                             enum PrimlowField which,
                                             double *buf,
                                             size_t len);

/**
 * Log-log least-squares slope of `values` against `deltas`.
 *
 * # Safety
 * `deltas` and `values` must hold `n` values; `slope` and `r2` writable.
 */
enum PrimlowStatus primlow_fit_rate(const double *deltas,
                                    const double *values,
                                    size_t n,
                                    double *slope,
                                    double *r2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIMLOW_H */
