#ifndef EMM_H
#define EMM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum EmmStatus {
  EMM_STATUS_OK = 0,
  EMM_STATUS_NULL_POINTER = 1,
  EMM_STATUS_INVALID_ARGUMENT = 2,
  EMM_STATUS_IO = 3,
  EMM_STATUS_DATA = 4,
  EMM_STATUS_CONFIG = 5,
  EMM_STATUS_POSITIVITY = 6,
  EMM_STATUS_SEPARATION = 7,
  EMM_STATUS_RANK_DEFICIENT = 8,
  EMM_STATUS_NUMERICAL = 9,
  /**
   * An output buffer has the wrong length.
   */
  EMM_STATUS_LENGTH_MISMATCH = 10,
  /**
   * The pipeline ran but at least one method failed.
   */
  EMM_STATUS_METHOD_FAILED = 11,
  EMM_STATUS_PANIC = 12,
} EmmStatus;

/**
 * Opaque fitted causal forest handle.
 */
typedef struct EmmCausalForest EmmCausalForest;

/**
 * Opaque dataset handle.
 */
typedef struct EmmDataset EmmDataset;

/**
 * Chain lengths for the Bayesian estimators; zero keeps the default.
 */
typedef struct EmmMcmcOptions {
  size_t burn_in;
  size_t draws;
} EmmMcmcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *emm_version(void);

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *emm_last_error_message(void);

/**
 * Load a CSV file. Every column other than the outcome and exposure is a covariate.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum EmmStatus emm_dataset_load_csv(const char *path,
                                    const char *outcome,
                                    const char *exposure,
                                    struct EmmDataset **out);

/**
 * Build a dataset from column-major covariates (`p` columns of length `n`),
 * a 0/1 exposure and an outcome. Covariates are named `x1..xp`; the outcome
 * kind is binary when every value is 0 or 1.
 *
 * # Safety
 * `covariates` must hold `n * p` values, `exposure` and `outcome` `n` each.
 */
enum EmmStatus emm_dataset_from_columns(const double *covariates,
                                        size_t n,
                                        size_t p,
                                        const double *exposure,
                                        const double *outcome,
                                        struct EmmDataset **out);

/**
 * Number of units, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t emm_dataset_n(const struct EmmDataset *data);

/**
 * Number of covariates, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t emm_dataset_p(const struct EmmDataset *data);

/**
 * # Safety
 * `data` must be null or a handle not yet freed.
 */
void emm_dataset_free(struct EmmDataset *data);

/**
 * Fit a causal forest. `num_trees == 0` keeps the default.
 *
 * # Safety
 * `data` must be a live handle and `out` writable.
 */
enum EmmStatus emm_grf_fit(const struct EmmDataset *data,
                           size_t num_trees,
                           uint64_t seed,
                           struct EmmCausalForest **out);

/**
 * Out-of-bag effects for the training units; `len` must equal n.
 *
 * # Safety
 * `model` must be a live handle and `out` hold `len` values.
 */
enum EmmStatus emm_grf_oob_ite(const struct EmmCausalForest *model, double *out, size_t len);

/**
 * Effect estimate and variance at a covariate point of length `p`.
 *
 * # Safety
 * `x` must hold `p` values; `estimate` and `variance` must be writable.
 */
enum EmmStatus emm_grf_predict(const struct EmmCausalForest *model,
                               const double *x,
                               size_t p,
                               double *estimate,
                               double *variance);

/**
 * Doubly robust average effect and its standard error.
 *
 * # Safety
 * `model` must be a live handle; `estimate` and `std_error` must be writable.
 */
enum EmmStatus emm_grf_ate(const struct EmmCausalForest *model,
                           double *estimate,
                           double *std_error);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void emm_grf_free(struct EmmCausalForest *model);

/**
 * Counterfactual BART effects (posterior means); `options` may be NULL.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `len == n` values.
 */
enum EmmStatus emm_bart_ite(const struct EmmDataset *data,
                            const struct EmmMcmcOptions *options,
                            uint64_t seed,
                            double *out,
                            size_t len);

/**
 * BCF effects (posterior means) with a logistic-regression propensity;
 * `options` may be NULL.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `len == n` values.
 */
enum EmmStatus emm_bcf_ite(const struct EmmDataset *data,
                           const struct EmmMcmcOptions *options,
                           uint64_t seed,
                           double *out,
                           size_t len);

/**
 * Logistic-regression propensity scores.
 *
 * # Safety
 * `data` must be a live handle and `out` hold `len == n` values.
 */
enum EmmStatus emm_propensity(const struct EmmDataset *data, double *out, size_t len);

/**
 * Run the pipeline described by a config file and write its outputs.
 * Returns `EMM_STATUS_METHOD_FAILED` when the report records failures.
 *
 * # Safety
 * `config_path` must be NUL-terminated.
 */
enum EmmStatus emm_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMM_H */
