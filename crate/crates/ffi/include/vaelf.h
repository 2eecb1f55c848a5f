#ifndef VAELF_H
#define VAELF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VaelfStatus {
  VAELF_STATUS_OK = 0,
  VAELF_STATUS_NULL_POINTER = 1,
  VAELF_STATUS_INVALID_ARGUMENT = 2,
  VAELF_STATUS_DIMENSION_MISMATCH = 3,
  VAELF_STATUS_OUT_OF_RANGE = 4,
  VAELF_STATUS_NON_FINITE = 5,
  VAELF_STATUS_IO = 6,
  VAELF_STATUS_CHECKPOINT = 7,
  VAELF_STATUS_CONFIG = 8,
  VAELF_STATUS_TRAINING = 9,
  VAELF_STATUS_PANIC = 99,
} VaelfStatus;

/**
 * Trained VAE parameters plus optimizer state.
 */
typedef struct VaelfModel VaelfModel;

/**
 * A train/valid/test partition of a tensor's observed entries.
 */
typedef struct VaelfSplit VaelfSplit;

/**
 * A k × N × M tensor with its observation mask.
 */
typedef struct VaelfTensor VaelfTensor;

typedef struct VaelfPosition {
  size_t channel;
  size_t day;
  size_t slot;
} VaelfPosition;

/**
 * Training hyperparameters; fill with [`vaelf_train_config_default`].
 */
typedef struct VaelfTrainConfig {
  size_t epochs_max;
  size_t batch_size;
  double lr;
  double beta1;
  double beta2;
  double eps_adam;
  size_t patience;
  uint64_t seed;
  size_t hidden_dim;
  size_t latent_dim;
  /**
   * Non-zero selects a ReLU μ head instead of identity.
   */
  uint8_t relu_mu;
  double kl_weight;
} VaelfTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vaelf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vaelf_version(void);

/**
 * Synthetic smart-meter tensor with the default channel profiles.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum VaelfStatus vaelf_tensor_synthetic(size_t k,
                                        size_t n_days,
                                        size_t m_slots,
                                        uint64_t seed,
                                        struct VaelfTensor **out);

/**
 * Tensor from dense storage-order arrays (channel, then day, then slot).
 * `observed` may be null, meaning every entry is observed.
 *
 * # Safety
 * `values` must hold `k * n_days * m_slots` doubles and `observed`, when
 * non-null, as many bytes.
 */
enum VaelfStatus vaelf_tensor_from_dense(size_t k,
                                         size_t n_days,
                                         size_t m_slots,
                                         const double *values,
                                         const uint8_t *observed,
                                         struct VaelfTensor **out);

/**
 * # Safety
 * `t` must be null or a handle from this library not yet freed.
 */
void vaelf_tensor_free(struct VaelfTensor *t);

/**
 * # Safety
 * `t` must be a live tensor handle; the out pointers may be null.
 */
enum VaelfStatus vaelf_tensor_dims(const struct VaelfTensor *t,
                                   size_t *k,
                                   size_t *n_days,
                                   size_t *m_slots);

/**
 * # Safety
 * `t` must be a live tensor handle and `out` valid for writing.
 */
enum VaelfStatus vaelf_tensor_observed_count(const struct VaelfTensor *t, size_t *out);

/**
 * Stored value at one cell. `*observed` is set to 0 for missing cells, in
 * which case `*value` is 0.
 *
 * # Safety
 * `t` must be a live tensor handle; `value` and `observed` valid for writing.
 */
enum VaelfStatus vaelf_tensor_get(const struct VaelfTensor *t,
                                  struct VaelfPosition pos,
                                  double *value,
                                  uint8_t *observed);

/**
 * Copy keeping ⌊density · kNM⌋ of the observed entries.
 *
 * # Safety
 * `t` must be a live tensor handle and `out` valid for writing.
 */
enum VaelfStatus vaelf_tensor_apply_sparsity(const struct VaelfTensor *t,
                                             double density,
                                             uint64_t seed,
                                             struct VaelfTensor **out);

/**
 * Per-channel min-max normalized copy.
 *
 * # Safety
 * `t` must be a live tensor handle and `out` valid for writing.
 */
enum VaelfStatus vaelf_tensor_normalize(const struct VaelfTensor *t, struct VaelfTensor **out);

/**
 * Maps normalized values of one channel back to raw units, in place.
 *
 * # Safety
 * `t` must be a live normalized tensor; `values` must hold `len` doubles.
 */
enum VaelfStatus vaelf_tensor_denormalize(const struct VaelfTensor *t,
                                          size_t channel,
                                          double *values,
                                          size_t len);

/**
 * 60/20/20 partition of the observed entries.
 *
 * # Safety
 * `t` must be a live tensor handle and `out` valid for writing.
 */
enum VaelfStatus vaelf_split_new(const struct VaelfTensor *t,
                                 uint64_t seed,
                                 struct VaelfSplit **out);

/**
 * # Safety
 * `s` must be a live split handle; the out pointers may be null.
 */
enum VaelfStatus vaelf_split_sizes(const struct VaelfSplit *s,
                                   size_t *train,
                                   size_t *valid,
                                   size_t *test);

/**
 * Copies up to `cap` test positions into `out` and stores the total count
 * in `len`. Pass `cap = 0` to query the count.
 *
 * # Safety
 * `s` must be a live split handle; `out` must hold `cap` positions.
 */
enum VaelfStatus vaelf_split_test_positions(const struct VaelfSplit *s,
                                            struct VaelfPosition *out,
                                            size_t cap,
                                            size_t *len);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void vaelf_split_free(struct VaelfSplit *s);

/**
 * # Safety
 * `out` must be valid for writing.
 */
enum VaelfStatus vaelf_train_config_default(struct VaelfTrainConfig *out);

/**
 * Trains a VAE on the training split of a normalized tensor, keeping the
 * epoch with the best validation RMSE. `best_epoch` may be null.
 *
 * # Safety
 * All handles must be live; `cfg` and `out` valid pointers.
 */
enum VaelfStatus vaelf_train(const struct VaelfTensor *t,
                             const struct VaelfSplit *s,
                             const struct VaelfTrainConfig *cfg,
                             struct VaelfModel **out,
                             size_t *best_epoch);

/**
 * Predictions at `len` positions, with the encoder fed every observed
 * entry of `t`.
 *
 * # Safety
 * Handles must be live; `positions` and `values` must hold `len` elements.
 */
enum VaelfStatus vaelf_model_predict(const struct VaelfModel *m,
                                     const struct VaelfTensor *t,
                                     const struct VaelfPosition *positions,
                                     size_t len,
                                     double *values);

/**
 * Test-split RMSE and MAE on the normalized scale. The test entries are
 * hidden from the encoder.
 *
 * # Safety
 * Handles must be live; `rmse` and `mae` may be null.
 */
enum VaelfStatus vaelf_model_evaluate_test(const struct VaelfModel *m,
                                           const struct VaelfTensor *t,
                                           const struct VaelfSplit *s,
                                           double *rmse,
                                           double *mae);

/**
 * # Safety
 * `m` must be a live model handle and `path` a NUL-terminated UTF-8 string.
 */
enum VaelfStatus vaelf_model_save(const struct VaelfModel *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string and `out` valid for writing.
 */
enum VaelfStatus vaelf_model_load(const char *path, struct VaelfModel **out);

/**
 * # Safety
 * `m` must be a live model handle; the out pointers may be null.
 */
enum VaelfStatus vaelf_model_dims(const struct VaelfModel *m,
                                  size_t *input_dim,
                                  size_t *hidden_dim,
                                  size_t *latent_dim);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void vaelf_model_free(struct VaelfModel *m);

/**
 * # Safety
 * `truth` and `pred` must hold `len` doubles; `out` valid for writing.
 */
enum VaelfStatus vaelf_rmse(const double *truth, const double *pred, size_t len, double *out);

/**
 * # Safety
 * `truth` and `pred` must hold `len` doubles; `out` valid for writing.
 */
enum VaelfStatus vaelf_mae(const double *truth, const double *pred, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VAELF_H */
