#ifndef LTMLAB_H
#define LTMLAB_H

/* Generated by cbindgen from the ltmlab-capi crate; edit the Rust source, not this file. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Anything but `Ok` leaves a message in
 * [`ltm_last_error`].
 */
typedef enum LtmStatus {
  LTM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  LTM_STATUS_NULL_ARGUMENT = 1,
  /**
   * An argument was out of domain (bad scale, empty context, ...).
   */
  LTM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The operating system reported an I/O failure.
   */
  LTM_STATUS_IO_ERROR = 3,
  /**
   * The file exists but is not a usable checkpoint.
   */
  LTM_STATUS_BAD_CHECKPOINT = 4,
  /**
   * The computation ran but could not produce a result (degenerate
   * fit, no convergence).
   */
  LTM_STATUS_NUMERIC_ERROR = 5,
  /**
   * An internal invariant failed; the library state is still sound.
   */
  LTM_STATUS_PANIC = 6,
} LtmStatus;

/**
 * A loaded model checkpoint. Opaque; create with [`ltm_model_load`],
 * release with [`ltm_model_free`].
 */
typedef struct LtmModel LtmModel;

/**
 * Power law L(A) = 10^(b0 * (log10_a0 - log10 A)) fitted by least squares
 * on log coordinates. `rss` is the residual sum of squares in ln space.
 */
typedef struct LtmPowerLawFit {
  double b0;
  double log10_a0;
  double rss;
  size_t n_points;
} LtmPowerLawFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static NUL-terminated string.
 */
const char *ltm_version(void);

/**
 * Message from the most recent failing call on this thread, or an empty
 * string. The pointer stays valid until the next failing call on the same
 * thread.
 */
const char *ltm_last_error(void);

/**
 * Loads a model checkpoint from a NUL-terminated UTF-8 path and stores the
 * new handle in `*out`. On any failure `*out` is left untouched.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * pointer storage.
 */
enum LtmStatus ltm_model_load(const char *path, struct LtmModel **out);

/**
 * Releases a handle from [`ltm_model_load`]. Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer returned by [`ltm_model_load`] that has not
 * been freed already.
 */
void ltm_model_free(struct LtmModel *model);

/**
 * Stores the model's trainable parameter count in `*out`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum LtmStatus ltm_model_num_parameters(const struct LtmModel *model, uint64_t *out);

/**
 * Stores the model's context window length (the number of past points one
 * forward pass can see) in `*out`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum LtmStatus ltm_model_context_length(const struct LtmModel *model, size_t *out);

/**
 * Autoregressive forecast: `n_samples` sampled continuations of `context`,
 * reduced per step to the sample mean and the 16th/84th percentiles.
 * Writes `horizon` doubles to each of `mean_out`, `lo_out`, and `hi_out`.
 * Identical inputs and seed produce identical output. The context is used
 * as-is; apply the training corpus' normalization before calling when the
 * checkpoint was trained on normalized data.
 *
 * With `horizon == 0` the call succeeds without touching the output
 * buffers, which may then be null.
 *
 * # Safety
 * `context` must point to `context_len` doubles; the three output buffers
 * must each hold `horizon` doubles (when `horizon > 0`).
 */
enum LtmStatus ltm_model_forecast(const struct LtmModel *model,
                                  const double *context,
                                  size_t context_len,
                                  size_t horizon,
                                  size_t n_samples,
                                  uint64_t seed,
                                  double *mean_out,
                                  double *lo_out,
                                  double *hi_out);

/**
 * Log density of the location-scale Student's-t at `y`, written to `*out`.
 * Requires `sigma > 0` and `nu > 0`, both finite.
 *
 * # Safety
 * `out` must be writable.
 */
enum LtmStatus ltm_studentt_logpdf(double y, double mu, double sigma, double nu, double *out);

/**
 * Closed-form CRPS of the location-scale Student's-t against the
 * observation `y`, written to `*out`. Requires `sigma > 0` and `nu > 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LtmStatus ltm_crps_studentt(double y, double mu, double sigma, double nu, double *out);

/**
 * Least-squares power law through `n_points` pairs of positive finite
 * `(abscissae[i], losses[i])`, fitted on log coordinates and written to
 * `*out`. Needs at least two points.
 *
 * # Safety
 * `abscissae` and `losses` must each point to `n_points` doubles and
 * `out` to an [`LtmPowerLawFit`].
 */
enum LtmStatus ltm_fit_power_law(const double *abscissae,
                                 const double *losses,
                                 size_t n_points,
                                 struct LtmPowerLawFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LTMLAB_H */
