#ifndef METASTAB_H
#define METASTAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_POINTER = 1,
  MS_STATUS_INVALID_ARGUMENT = 2,
  MS_STATUS_INVALID_POTENTIAL = 3,
  MS_STATUS_INVALID_MODEL = 4,
  MS_STATUS_PRECONDITION = 5,
  MS_STATUS_NUMERICAL = 6,
  MS_STATUS_BUFFER_TOO_SMALL = 7,
  MS_STATUS_PANIC = 8,
} MsStatus;

/**
 * Interlaced minima and saddles of a potential.
 */
typedef struct MsLandscape MsLandscape;

/**
 * Lévy measure with its Gaussian part and drift.
 */
typedef struct MsLevyModel MsLevyModel;

/**
 * Polynomial potential `U(x) = Σ a_k x^k`.
 */
typedef struct MsPotential MsPotential;

/**
 * Simulation engine bound to a potential, landscape and noise model.
 */
typedef struct MsSimulator MsSimulator;

/**
 * Simulation settings. `delta <= 0` selects `Δ_0/4`.
 */
typedef struct MsSimParams {
  double eps;
  double rho;
  double gamma;
  double margin_exponent;
  double h;
  double horizon;
  double overflow;
  double delta;
  uint64_t seed;
  bool exact_stable;
} MsSimParams;

/**
 * One first-exit record.
 */
typedef struct MsExitRecord {
  double stop_time;
  /**
   * Position at `stop_time`.
   */
  double x;
  /**
   * Well of the landing point, -1 if none.
   */
  int64_t landing_well;
  uint64_t n_big_jumps;
  /**
   * 1 if the horizon was reached or the path overflowed.
   */
  bool censored;
  bool overflowed;
} MsExitRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *ms_last_error(void);

/**
 * Builds `U` from `n` coefficients `a_0..a_{n-1}`.
 *
 * # Safety
 * `coefficients` must point to `n` readable doubles; `out` must be writable.
 */
enum MsStatus ms_potential_new(const double *coefficients, size_t n, struct MsPotential **out);

/**
 * # Safety
 * `p` must come from [`ms_potential_new`] and not be used afterwards.
 */
void ms_potential_free(struct MsPotential *p);

/**
 * `-U'(x)`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum MsStatus ms_potential_drift(const struct MsPotential *p, double x, double *out);

/**
 * Locates the extrema of `p`.
 *
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum MsStatus ms_landscape_analyze(const struct MsPotential *p, struct MsLandscape **out);

/**
 * # Safety
 * `l` must come from [`ms_landscape_analyze`] and not be used afterwards.
 */
void ms_landscape_free(struct MsLandscape *l);

/**
 * Number of wells, 0 for a null handle.
 *
 * # Safety
 * `l` must be null or a live handle.
 */
size_t ms_landscape_n_wells(const struct MsLandscape *l);

/**
 * Minima in increasing order.
 *
 * # Safety
 * `l` must be a live handle; `buf` must hold `cap` doubles.
 */
enum MsStatus ms_landscape_minima(const struct MsLandscape *l,
                                  double *buf,
                                  size_t cap,
                                  size_t *len);

/**
 * Saddles in increasing order.
 *
 * # Safety
 * `l` must be a live handle; `buf` must hold `cap` doubles.
 */
enum MsStatus ms_landscape_saddles(const struct MsLandscape *l,
                                   double *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * Stable model with Lévy measure `c1|y|^{-1-α}` on `y<0` and
 * `c2 y^{-1-α}` on `y>0`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsStatus ms_levy_stable(double alpha, double c1, double c2, struct MsLevyModel **out);

/**
 * General model: tails `c_± u^{-r} ℓ(u)` with `ℓ = 1` when `log_power` is
 * NaN and `ℓ(u) = ln(e+u)^{log_power}` otherwise. `truncated` drops all
 * jumps below 1; otherwise the inner measure is stable of index `r`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MsStatus ms_levy_new(double d,
                          double mu,
                          double r,
                          double c_plus,
                          double c_minus,
                          double log_power,
                          bool truncated,
                          struct MsLevyModel **out);

/**
 * # Safety
 * `m` must come from a `ms_levy_*` constructor and not be used afterwards.
 */
void ms_levy_free(struct MsLevyModel *m);

/**
 * Generator of the limiting chain (time scale `t/H(1/ε)`), row-major
 * `n×n` with `n` the number of wells.
 *
 * # Safety
 * Handles must be live; `buf` must hold `cap` doubles.
 */
enum MsStatus ms_generator(const struct MsLandscape *l,
                           const struct MsLevyModel *m,
                           double *buf,
                           size_t cap,
                           size_t *len);

/**
 * `e^{tQ}`, row-major.
 *
 * # Safety
 * Handles must be live; `buf` must hold `cap` doubles.
 */
enum MsStatus ms_transition_matrix(const struct MsLandscape *l,
                                   const struct MsLevyModel *m,
                                   double t,
                                   double *buf,
                                   size_t cap,
                                   size_t *len);

/**
 * `λ^i(ε)`, the rate of jumps that leave well `well` directly.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum MsStatus ms_exit_rate(const struct MsLandscape *l,
                           const struct MsLevyModel *m,
                           size_t well,
                           double eps,
                           double *out);

/**
 * `1/H(1/ε)`.
 *
 * # Safety
 * `m` must be live; `out` must be writable.
 */
enum MsStatus ms_time_scale(const struct MsLevyModel *m, double eps, double *out);

/**
 * Library defaults for noise level `eps`.
 */
struct MsSimParams ms_sim_params_default(double eps);

/**
 * # Safety
 * Handles must be live; `params` readable; `out` writable.
 */
enum MsStatus ms_simulator_new(const struct MsPotential *p,
                               const struct MsLandscape *l,
                               const struct MsLevyModel *m,
                               const struct MsSimParams *params,
                               struct MsSimulator **out);

/**
 * # Safety
 * `s` must come from [`ms_simulator_new`] and not be used afterwards.
 */
void ms_simulator_free(struct MsSimulator *s);

/**
 * First exits from well `well` started at its minimum, for path indices
 * `0..n`, computed on `workers` threads (0 selects the default). Results
 * do not depend on `workers`.
 *
 * # Safety
 * `s` must be live; `records` must hold `n` entries.
 */
enum MsStatus ms_first_exit_batch(const struct MsSimulator *s,
                                  size_t well,
                                  size_t n,
                                  size_t workers,
                                  struct MsExitRecord *records);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METASTAB_H */
