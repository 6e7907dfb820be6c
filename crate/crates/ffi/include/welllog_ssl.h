#ifndef WELLLOG_SSL_H
#define WELLLOG_SSL_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum WlsStatus {
  WLS_STATUS_OK = 0,
  WLS_STATUS_NULL_POINTER = 1,
  WLS_STATUS_INVALID_ARGUMENT = 2,
  WLS_STATUS_IO = 3,
  WLS_STATUS_PARSE = 4,
  WLS_STATUS_DOMAIN = 5,
  WLS_STATUS_PANIC = 6,
} WlsStatus;

/**
 * Opaque dataset handle.
 */
typedef struct WlsDataset WlsDataset;

/**
 * Opaque network handle.
 */
typedef struct WlsModel WlsModel;

/**
 * Opaque self-training result handle.
 */
typedef struct WlsSelfTrainResult WlsSelfTrainResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *wls_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void wls_string_free(char *s);

/**
 * Loads a dataset CSV. `label_column` may be null for unlabelled files;
 * `labels` is a comma-separated class list, null meaning `D,W,I,O`.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum WlsStatus wls_dataset_load_csv(const char *path,
                                    const char *label_column,
                                    const char *labels,
                                    struct WlsDataset **out);

/**
 * # Safety
 * `d` must be null or a live handle from this library.
 */
void wls_dataset_free(struct WlsDataset *d);

/**
 * Sample count; 0 for null.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
size_t wls_dataset_len(const struct WlsDataset *d);

/**
 * Feature count; 0 for null.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
size_t wls_dataset_dim(const struct WlsDataset *d);

/**
 * Min-max normalizes both datasets in place using statistics over their union.
 *
 * # Safety
 * Both pointers must be live, distinct handles.
 */
enum WlsStatus wls_dataset_normalize_pair(struct WlsDataset *labeled, struct WlsDataset *pool);

/**
 * New network with default hidden width and learning-rate scales.
 *
 * # Safety
 * `out` must be writable.
 */
enum WlsStatus wls_model_new(size_t input_dim,
                             size_t classes,
                             size_t epochs,
                             uint64_t seed,
                             struct WlsModel **out);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
void wls_model_free(struct WlsModel *m);

/**
 * Trains on a fully labelled dataset; writes epochs run to `out_epochs` if non-null.
 *
 * # Safety
 * Handles must be live; `out_epochs` null or writable.
 */
enum WlsStatus wls_model_train(struct WlsModel *m,
                               const struct WlsDataset *data,
                               size_t *out_epochs);

/**
 * Class posteriors for one feature vector. `probs` must hold `probs_len`
 * values and `probs_len` must equal the class count.
 *
 * # Safety
 * `x` must point to `x_len` doubles and `probs` to `probs_len` writable doubles.
 */
enum WlsStatus wls_model_predict_proba(const struct WlsModel *m,
                                       const double *x,
                                       size_t x_len,
                                       double *probs,
                                       size_t probs_len);

/**
 * Serializes the network as JSON; free the string with [`wls_string_free`].
 *
 * # Safety
 * `m` must be live; `out` writable.
 */
enum WlsStatus wls_model_to_json(const struct WlsModel *m, char **out);

/**
 * Restores a network from [`wls_model_to_json`] output.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` writable.
 */
enum WlsStatus wls_model_from_json(const char *json, struct WlsModel **out);

/**
 * Self-trains with the default policy schedule.
 *
 * # Safety
 * Dataset handles must be live; `out` writable.
 */
enum WlsStatus wls_selftrain_run(const struct WlsDataset *labeled,
                                 const struct WlsDataset *pool,
                                 size_t epochs,
                                 uint64_t seed,
                                 struct WlsSelfTrainResult **out);

/**
 * # Safety
 * `r` must be null or a live handle.
 */
void wls_selftrain_free(struct WlsSelfTrainResult *r);

/**
 * Pool size covered by the assignment; 0 for null.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t wls_selftrain_len(const struct WlsSelfTrainResult *r);

/**
 * Number of update steps run; 0 for null.
 *
 * # Safety
 * `r` must be null or a live handle.
 */
size_t wls_selftrain_steps(const struct WlsSelfTrainResult *r);

/**
 * Label index, max posterior and strength (1 strong, 0 weak) of pool sample
 * `index`. Any output pointer may be null.
 *
 * # Safety
 * `r` must be live; non-null outputs writable.
 */
enum WlsStatus wls_selftrain_assignment(const struct WlsSelfTrainResult *r,
                                        size_t index,
                                        size_t *out_label,
                                        double *out_max_prob,
                                        uint8_t *out_strong);

/**
 * Copy of the final network; free it with [`wls_model_free`].
 *
 * # Safety
 * `r` must be live; `out` writable.
 */
enum WlsStatus wls_selftrain_model(const struct WlsSelfTrainResult *r, struct WlsModel **out);

/**
 * Smallest over largest class count.
 *
 * # Safety
 * `counts` must point to `len` values; `out` writable.
 */
enum WlsStatus wls_balance_factor(const size_t *counts, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WELLLOG_SSL_H */
