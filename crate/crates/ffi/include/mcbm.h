#ifndef MCBM_H
#define MCBM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum McbmStatus {
  MCBM_STATUS_OK = 0,
  MCBM_STATUS_NULL_POINTER = 1,
  MCBM_STATUS_INVALID_UTF8 = 2,
  MCBM_STATUS_PARSE = 3,
  MCBM_STATUS_EMPTY_DATASET = 4,
  MCBM_STATUS_SPEC = 5,
  MCBM_STATUS_SHAPE = 6,
  MCBM_STATUS_UNSUPPORTED_LEVEL = 7,
  MCBM_STATUS_TRAINING_DIVERGED = 8,
  MCBM_STATUS_FIT = 9,
  MCBM_STATUS_CAPACITY = 10,
  MCBM_STATUS_IO = 11,
  MCBM_STATUS_JSON = 12,
  MCBM_STATUS_CSV = 13,
  MCBM_STATUS_BUFFER_TOO_SMALL = 14,
  MCBM_STATUS_PANIC = 15,
} McbmStatus;

typedef enum McbmRegime {
  MCBM_REGIME_EFFICIENT = 0,
  MCBM_REGIME_BALANCED = 1,
  MCBM_REGIME_HEAVY_TAILED = 2,
} McbmRegime;

typedef struct McbmDataset McbmDataset;

typedef struct McbmModel McbmModel;

typedef struct McbmRanking McbmRanking;

/**
 * Parameters of the planted synthetic generator.
 */
typedef struct McbmSyntheticSpec {
  size_t levels;
  size_t base_size;
  double growth_rate;
  double decay_rate;
  size_t classes;
  size_t samples;
  size_t redundancy_copies;
  double noise;
  double feature_noise;
  /**
   * 0 selects the default of `2K`.
   */
  size_t feature_dim;
  uint64_t seed;
} McbmSyntheticSpec;

typedef struct McbmTrainConfig {
  bool efficient;
  bool sequential;
  /**
   * Efficient mode only: one random level per batch.
   */
  bool random_level;
  double alpha;
  double learning_rate;
  size_t epochs;
  size_t batch_size;
  uint64_t seed;
} McbmTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcbm_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *mcbm_last_error_message(void);

/**
 * Loads a dataset. `format` is `"csv"` or `"cub"`.
 *
 * # Safety
 * `path` and `format` must be NUL-terminated strings; `out` must be writable.
 */
enum McbmStatus mcbm_dataset_load(const char *path, const char *format, struct McbmDataset **out);

/**
 * Generates a planted synthetic dataset.
 *
 * # Safety
 * `spec` must point to a valid struct; `out` must be writable.
 */
enum McbmStatus mcbm_dataset_generate(const struct McbmSyntheticSpec *spec,
                                      struct McbmDataset **out);

/**
 * Writes `N`, `K`, `F` and `C`. Any out pointer may be NULL.
 *
 * # Safety
 * `dataset` must be a live handle.
 */
enum McbmStatus mcbm_dataset_shape(const struct McbmDataset *dataset,
                                   size_t *samples,
                                   size_t *concepts,
                                   size_t *features,
                                   size_t *classes);

/**
 * # Safety
 * `dataset` must come from this library and not be freed twice. NULL is a no-op.
 */
void mcbm_dataset_free(struct McbmDataset *dataset);

/**
 * Plug-in mutual information of two discrete sequences, in nats.
 *
 * # Safety
 * `x` and `y` must each hold `len` values.
 */
enum McbmStatus mcbm_mutual_information(const int64_t *x,
                                        const int64_t *y,
                                        size_t len,
                                        double *out);

/**
 * Greedy mRMR ordering of all concepts of `dataset`.
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum McbmStatus mcbm_rank(const struct McbmDataset *dataset, struct McbmRanking **out);

/**
 * # Safety
 * `ranking` must be a live handle.
 */
enum McbmStatus mcbm_ranking_len(const struct McbmRanking *ranking, size_t *out);

/**
 * Copies the 0-based concept order into `buffer`.
 *
 * # Safety
 * `buffer` must have room for `capacity` values.
 */
enum McbmStatus mcbm_ranking_order(const struct McbmRanking *ranking,
                                   size_t *buffer,
                                   size_t capacity);

/**
 * # Safety
 * `ranking` must come from this library and not be freed twice. NULL is a no-op.
 */
void mcbm_ranking_free(struct McbmRanking *ranking);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum McbmStatus mcbm_model_load(const char *path, struct McbmModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum McbmStatus mcbm_model_save(const struct McbmModel *model, const char *path);

/**
 * Trains a model on `dataset` with its mRMR concept order.
 *
 * `levels` lists the nesting schedule; the last entry must equal `K`.
 *
 * # Safety
 * `levels` must hold `n_levels` values; `config` must be valid; `out` writable.
 */
enum McbmStatus mcbm_model_train(const struct McbmDataset *dataset,
                                 const size_t *levels,
                                 size_t n_levels,
                                 const struct McbmTrainConfig *config,
                                 struct McbmModel **out);

/**
 * Writes `F`, `K` and `C`. Any out pointer may be NULL.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum McbmStatus mcbm_model_shape(const struct McbmModel *model,
                                 size_t *features,
                                 size_t *concepts,
                                 size_t *classes);

/**
 * Concept probabilities of one input row, in the model's mRMR order.
 *
 * # Safety
 * `x` must hold `n_features` values and `probs` room for `capacity` values.
 */
enum McbmStatus mcbm_model_forward(const struct McbmModel *model,
                                   const double *x,
                                   size_t n_features,
                                   double *probs,
                                   size_t capacity);

/**
 * Class probabilities from the first `level` ordered concepts.
 *
 * # Safety
 * `concepts` must hold `n_concepts` values and `out` room for `capacity` values.
 */
enum McbmStatus mcbm_model_predict_at(const struct McbmModel *model,
                                      const double *concepts,
                                      size_t n_concepts,
                                      size_t level,
                                      double *out,
                                      size_t capacity);

/**
 * # Safety
 * `model` must come from this library and not be freed twice. NULL is a no-op.
 */
void mcbm_model_free(struct McbmModel *model);

/**
 * Replaces the first `k` probabilities with the 0/1 ground truth.
 *
 * # Safety
 * `probs`, `truth` and `out` must each hold `len` values.
 */
enum McbmStatus mcbm_intervene_prefix(const double *probs,
                                      const uint8_t *truth,
                                      size_t len,
                                      size_t k,
                                      double *out);

/**
 * Cost regime of growth `r` and decay `gamma`. `alpha` receives
 * `1 + ln gamma / ln r` in the heavy-tailed regime and NaN otherwise.
 *
 * # Safety
 * `regime` must be writable; `alpha` may be NULL.
 */
enum McbmStatus mcbm_regime_classify(double growth_rate,
                                     double decay_rate,
                                     enum McbmRegime *regime,
                                     double *alpha);

/**
 * Closed-form upper bound on the expected intervention cost.
 *
 * # Safety
 * `out` must be writable.
 */
enum McbmStatus mcbm_expected_cost_bound(double growth_rate,
                                         double decay_rate,
                                         double base_size,
                                         size_t levels,
                                         double norm_const,
                                         double *out);

/**
 * Geometric fit of a level histogram. Any out pointer may be NULL.
 *
 * # Safety
 * `counts` must hold `len` values.
 */
enum McbmStatus mcbm_fit_geometric_decay(const double *counts,
                                         size_t len,
                                         double *gamma_hat,
                                         double *r_squared,
                                         double *c_hat);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCBM_H */
