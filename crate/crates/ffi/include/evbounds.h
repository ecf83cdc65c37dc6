#ifndef EVBOUNDS_H
#define EVBOUNDS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; the numeric values of 2–4 match the CLI exit codes.
 */
typedef enum EvbStatus {
  EVB_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EVB_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration, name or argument.
   */
  EVB_STATUS_CONFIG = 2,
  /**
   * A numerical or reliability failure.
   */
  EVB_STATUS_NUMERICAL = 3,
  /**
   * The result was computed but a hypothesis of the theorem is not verified.
   */
  EVB_STATUS_HYPOTHESIS = 4,
  /**
   * A string argument was not valid UTF-8.
   */
  EVB_STATUS_INVALID_UTF8 = 5,
  /**
   * A caller-provided buffer has the wrong length.
   */
  EVB_STATUS_BUFFER_LENGTH = 6,
  /**
   * An internal panic was caught at the boundary.
   */
  EVB_STATUS_PANIC = 7,
} EvbStatus;

/**
 * Opaque experiment state: design, pseudo-true fit, ellipsoid and constants.
 */
typedef struct EvbSetup EvbSetup;

/**
 * Two-sided bounds for one response vector.
 */
typedef struct EvbBounds {
  double lower;
  double upper;
  double laplace;
  double ell_star;
  double log_det_h;
  /**
   * `C` of the empirical process.
   */
  double c_process;
  /**
   * Curvature ratio `c`.
   */
  double c_curvature;
  /**
   * Nonzero when every hypothesis of the theorem was verified.
   */
  int32_t theorem_certified;
} EvbBounds;

/**
 * An independent log-evidence estimate.
 */
typedef struct EvbEstimate {
  double log_z;
  double standard_error;
  /**
   * Integrand evaluations or importance draws used.
   */
  uint64_t n_evals;
  /**
   * Effective sample size, or NaN for deterministic methods.
   */
  double ess;
} EvbEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or null.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *evb_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *evb_version(void);

/**
 * Build a setup from a JSON configuration. On success `*out` owns a handle
 * that must be released with [`evb_setup_free`].
 *
 * # Safety
 * `config_json` must be a nul-terminated string and `out` a valid pointer.
 */
enum EvbStatus evb_setup_new(const char *config_json, struct EvbSetup **out);

/**
 * Release a setup; null is ignored.
 *
 * # Safety
 * `setup` must come from [`evb_setup_new`] and not be used afterwards.
 */
void evb_setup_free(struct EvbSetup *setup);

/**
 * Sample size and model dimension of a setup.
 *
 * # Safety
 * All pointers must be valid.
 */
enum EvbStatus evb_setup_shape(const struct EvbSetup *setup, size_t *n, size_t *d);

/**
 * Pseudo-true coefficients, written to `beta` of length `d`.
 *
 * # Safety
 * `beta` must point to `d` writable doubles.
 */
enum EvbStatus evb_setup_beta_star(const struct EvbSetup *setup, double *beta, size_t d);

/**
 * Draw the response vector of replicate `replicate` into `y` of length `n`.
 *
 * # Safety
 * `y` must point to `n` writable doubles.
 */
enum EvbStatus evb_simulate(const struct EvbSetup *setup, uint64_t replicate, double *y, size_t n);

/**
 * Bounds for the response `y`. Returns [`EvbStatus::Hypothesis`] (with `*out`
 * filled) when some hypothesis of the theorem is not verified.
 *
 * # Safety
 * `y` must point to `n` doubles and `out` must be valid.
 */
enum EvbStatus evb_bounds(const struct EvbSetup *setup,
                          const double *y,
                          size_t n,
                          struct EvbBounds *out);

/**
 * Log evidence of `y` from the configured oracle.
 *
 * # Safety
 * `y` must point to `n` doubles and `out` must be valid.
 */
enum EvbStatus evb_oracle(const struct EvbSetup *setup,
                          const double *y,
                          size_t n,
                          struct EvbEstimate *out);

/**
 * Exact log evidence of the Gaussian linear model `y ~ N(Xβ, σ²I)`,
 * `β ~ N(0, τ²I)`. `x` is `n × d`, row-major.
 *
 * # Safety
 * `x` must point to `n·d` doubles, `y` to `n`, and `out` must be valid.
 */
enum EvbStatus evb_conjugate_log_z(const double *x,
                                   size_t n,
                                   size_t d,
                                   const double *y,
                                   double sigma,
                                   double tau,
                                   double *out);

/**
 * Run a coverage experiment and return its summary as JSON in `*out`,
 * to be released with [`evb_string_free`].
 *
 * # Safety
 * `config_json` must be nul-terminated and `out` valid.
 */
enum EvbStatus evb_coverage_json(const char *config_json, char **out);

/**
 * Release a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void evb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVBOUNDS_H */
