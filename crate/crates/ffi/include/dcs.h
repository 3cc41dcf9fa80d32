#ifndef DCS_H
#define DCS_H

/* Generated from the dcs-ffi crate sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum DcsStatus {
  DCS_STATUS_OK = 0,
  DCS_STATUS_NULL_POINTER = 1,
  DCS_STATUS_INVALID_ARGUMENT = 2,
  DCS_STATUS_DEGENERATE_COLUMN = 3,
  DCS_STATUS_NUMERICAL_BREAKDOWN = 4,
  DCS_STATUS_BUDGET_EXCEEDED = 5,
  DCS_STATUS_IO = 6,
  DCS_STATUS_CONFIG = 7,
  DCS_STATUS_PANIC = 8,
} DcsStatus;

/**
 * Opaque measurement ensemble handle.
 */
typedef struct DcsEnsemble DcsEnsemble;

/**
 * Knobs shared by all iterative solvers. Obtain defaults from
 * [`dcs_recovery_options_default`]; unset optional fields stay NaN or 0.
 */
typedef struct DcsRecoveryOptions {
  /**
   * Iteration cap, at least 1.
   */
  uint32_t max_iters;
  /**
   * Variance floor below which the turbo solver stops.
   */
  double stop_eps;
  /**
   * 0 = elementwise nearest symbol, 1 = keep the s largest magnitudes.
   */
  uint8_t final_quantizer;
  /**
   * Shrinkage for the soft-threshold baseline; NaN means unset.
   */
  double ist_tau;
  /**
   * Greedy iteration count for the pursuit baseline; 0 means unset.
   */
  uint32_t omp_iters;
  /**
   * Stop when an iteration moves no symbol estimate more than this;
   * NaN disables early exit.
   */
  double early_exit_tol;
  /**
   * Nonzero selects the alternative turbo variance bookkeeping.
   */
  uint8_t tsr_alt_variance_update;
} DcsRecoveryOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread. Never null.
 */
const char *dcs_last_error_message(void);

/**
 * ABI revision; bumped on any breaking change to this header.
 */
uint32_t dcs_abi_version(void);

/**
 * Draws a seeded random partial-unitary ensemble with `k` rows and `l`
 * columns. On success stores a heap handle in `*out`; free it with
 * [`dcs_ensemble_free`].
 */
enum DcsStatus dcs_ensemble_build(uint64_t seed, size_t k, size_t l, struct DcsEnsemble **out);

/**
 * Releases an ensemble handle. Null is a no-op.
 */
void dcs_ensemble_free(struct DcsEnsemble *ensemble);

/**
 * Number of measurement rows `K`.
 */
size_t dcs_ensemble_rows(const struct DcsEnsemble *ensemble);

/**
 * Signal length `L`.
 */
size_t dcs_ensemble_cols(const struct DcsEnsemble *ensemble);

/**
 * Copies the assembled `K x L` measurement matrix into `matrix_out` in
 * row-major order; the buffer must hold `K * L` doubles.
 */
enum DcsStatus dcs_ensemble_copy_matrix(const struct DcsEnsemble *ensemble,
                                        double *matrix_out,
                                        size_t len);

/**
 * Fills `out` with the library defaults.
 */
enum DcsStatus dcs_recovery_options_default(struct DcsRecoveryOptions *out);

/**
 * Iterative soft-feedback recovery (the primary algorithm). Writes the
 * alphabet-constrained estimate into `x_out` (length `L`).
 */
enum DcsStatus dcs_recover_ims(const struct DcsEnsemble *ensemble,
                               const double *y,
                               size_t y_len,
                               double sigma_n_sq,
                               size_t sparsity,
                               const struct DcsRecoveryOptions *options,
                               double *x_out,
                               size_t x_len,
                               uint32_t *iters_out,
                               uint8_t *diverged_out);

/**
 * Turbo recovery with scalar variance exchange.
 */
enum DcsStatus dcs_recover_tsr(const struct DcsEnsemble *ensemble,
                               const double *y,
                               size_t y_len,
                               double sigma_n_sq,
                               size_t sparsity,
                               const struct DcsRecoveryOptions *options,
                               double *x_out,
                               size_t x_len,
                               uint32_t *iters_out,
                               uint8_t *diverged_out);

/**
 * Hard-thresholding baseline. Ignores `sigma_n_sq`.
 */
enum DcsStatus dcs_recover_iht(const struct DcsEnsemble *ensemble,
                               const double *y,
                               size_t y_len,
                               double sigma_n_sq,
                               size_t sparsity,
                               const struct DcsRecoveryOptions *options,
                               double *x_out,
                               size_t x_len,
                               uint32_t *iters_out,
                               uint8_t *diverged_out);

/**
 * Soft-thresholding baseline; requires `ist_tau` in the options. Ignores
 * `sigma_n_sq`.
 */
enum DcsStatus dcs_recover_ist(const struct DcsEnsemble *ensemble,
                               const double *y,
                               size_t y_len,
                               double sigma_n_sq,
                               size_t sparsity,
                               const struct DcsRecoveryOptions *options,
                               double *x_out,
                               size_t x_len,
                               uint32_t *iters_out,
                               uint8_t *diverged_out);

/**
 * Greedy pursuit baseline; requires `omp_iters` in the options. Ignores
 * `sigma_n_sq`.
 */
enum DcsStatus dcs_recover_omp(const struct DcsEnsemble *ensemble,
                               const double *y,
                               size_t y_len,
                               double sigma_n_sq,
                               size_t sparsity,
                               const struct DcsRecoveryOptions *options,
                               double *x_out,
                               size_t x_len,
                               uint32_t *iters_out,
                               uint8_t *diverged_out);

/**
 * Exhaustive maximum-likelihood search over all supports and sign
 * patterns. Fails with `BudgetExceeded` beyond one million candidates.
 */
enum DcsStatus dcs_recover_ml(const struct DcsEnsemble *ensemble,
                              const double *y,
                              size_t y_len,
                              size_t sparsity,
                              double *x_out,
                              size_t x_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCS_H */
