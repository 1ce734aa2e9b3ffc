#ifndef ISAC_H
#define ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_ARGUMENT = 2,
  ISAC_STATUS_CONFIG = 3,
  ISAC_STATUS_DOMAIN = 4,
  ISAC_STATUS_DIMENSION = 5,
  ISAC_STATUS_DIVERGED = 6,
  ISAC_STATUS_IO = 7,
  /**
   * The requested trial aborted; the message says why.
   */
  ISAC_STATUS_ABORTED = 8,
  ISAC_STATUS_PANIC = 9,
  ISAC_STATUS_OTHER = 10,
} IsacStatus;

typedef enum IsacMethod {
  ISAC_METHOD_ALTERNATING = 0,
  ISAC_METHOD_BASELINE = 1,
} IsacMethod;

/**
 * Configuration plus precomputed channels.
 */
typedef struct IsacExperiment IsacExperiment;

/**
 * Outcome of both methods on one trial.
 */
typedef struct IsacTrialResult IsacTrialResult;

typedef struct IsacComplex {
  double re;
  double im;
} IsacComplex;

/**
 * Posterior mean and variance of one scalar unknown.
 */
typedef struct IsacPosterior {
  struct IsacComplex mean;
  double var;
} IsacPosterior;

typedef struct IsacMetrics {
  double detection_rate_paper;
  double detection_tpr;
  double ser;
  double mse;
  size_t iterations;
} IsacMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next call into the library.
 */
const char *isac_last_error(void);

/**
 * Library version, static storage.
 */
const char *isac_version(void);

/**
 * Free-space gain from `(ax, ay)` to `(bx, by)` in metres.
 */
enum IsacStatus isac_los_gain(double ax,
                              double ay,
                              double bx,
                              double by,
                              double wavelength,
                              struct IsacComplex *gain);

/**
 * QPSK symbol denoiser: spike with probability `1 - sparsity`, otherwise a
 * Gaussian of standard deviation `std_dev` around each point.
 */
enum IsacStatus isac_denoise_symbol_qpsk(double sparsity,
                                         double std_dev,
                                         struct IsacComplex r,
                                         double tau,
                                         struct IsacPosterior *posterior);

/**
 * Scattering-coefficient denoiser with a Gaussian slab truncated to `(0, 1]`.
 * The imaginary part of the returned mean is zero.
 */
enum IsacStatus isac_denoise_scatter(double sparsity,
                                     double mean,
                                     double std_dev,
                                     double r,
                                     double tau,
                                     struct IsacPosterior *posterior);

/**
 * Experiment with the built-in desk-scale configuration.
 */
enum IsacStatus isac_experiment_new_desk(struct IsacExperiment **handle);

/**
 * Experiment from TOML text, with missing keys taking their desk defaults.
 */
enum IsacStatus isac_experiment_from_toml(const char *toml, struct IsacExperiment **handle);

void isac_experiment_free(struct IsacExperiment *handle);

/**
 * Number of grid cells.
 */
enum IsacStatus isac_experiment_cells(const struct IsacExperiment *handle, size_t *cells);

/**
 * Trials per cell.
 */
enum IsacStatus isac_experiment_trials(const struct IsacExperiment *handle, size_t *trials);

/**
 * Runs both methods on trial `trial` of cell `cell`. The result is
 * identical to the corresponding sweep row.
 */
enum IsacStatus isac_experiment_run_trial(const struct IsacExperiment *handle,
                                          size_t cell,
                                          size_t trial,
                                          struct IsacTrialResult **result);

/**
 * Metrics of one method. Returns `ABORTED` with the reason when that run failed.
 */
enum IsacStatus isac_trial_result_metrics(const struct IsacTrialResult *result,
                                          enum IsacMethod method,
                                          struct IsacMetrics *metrics);

/**
 * Initial power ratio of the trial, NaN when the trial aborted.
 */
enum IsacStatus isac_trial_result_initial_ratio(const struct IsacTrialResult *result,
                                                double *ratio);

void isac_trial_result_free(struct IsacTrialResult *result);

/**
 * Runs the whole grid and writes the CSV outputs into `out_dir`.
 */
enum IsacStatus isac_experiment_sweep(const struct IsacExperiment *handle, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_H */
