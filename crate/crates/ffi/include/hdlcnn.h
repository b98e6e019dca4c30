#ifndef HDLCNN_H
#define HDLCNN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HdlStatus {
  HDL_STATUS_OK = 0,
  HDL_STATUS_NULL_POINTER = 1,
  HDL_STATUS_INVALID_ARGUMENT = 2,
  HDL_STATUS_IO = 3,
  /**
   * Not a model file, wrong version, truncated or failed checksum.
   */
  HDL_STATUS_FORMAT = 4,
  /**
   * Buffer sizes disagree with the model's dimensions.
   */
  HDL_STATUS_SHAPE = 5,
  HDL_STATUS_UNTRAINED = 6,
  HDL_STATUS_INTERNAL = 7,
  HDL_STATUS_PANIC = 8,
} HdlStatus;

/**
 * Opaque model handle.
 */
typedef struct HdlModel HdlModel;

typedef struct HdlDims {
  size_t n_features;
  size_t n_timesteps;
  size_t n_classes;
  /**
   * Rows in the first segment after reordering.
   */
  size_t boundary;
} HdlDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hdl_version(void);

/**
 * Message for the last failed call on this thread ("" after a success).
 * Valid until the next `hdl_*` call on the same thread.
 */
const char *hdl_last_error(void);

/**
 * Loads a model file into a new handle stored in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HdlStatus hdl_model_load(const char *path, struct HdlModel **out);

/**
 * Writes the model to `path` (atomically).
 *
 * # Safety
 * `model` must come from [`hdl_model_load`]; `path` must be NUL-terminated.
 */
enum HdlStatus hdl_model_save(const struct HdlModel *model, const char *path);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`hdl_model_load`] and not be used afterwards.
 */
void hdl_model_free(struct HdlModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum HdlStatus hdl_model_dims(const struct HdlModel *model, struct HdlDims *out);

/**
 * Copies the model's feature permutation (`p` entries) into `out`.
 *
 * # Safety
 * `out` must hold `len` writable `size_t`s.
 */
enum HdlStatus hdl_model_ordering(const struct HdlModel *model, size_t *out, size_t len);

/**
 * Class probabilities for `n` samples: `x` holds `n * p * t` doubles and
 * `probs` receives `n * n_classes`.
 *
 * # Safety
 * Buffers must be valid for the sizes given.
 */
enum HdlStatus hdl_predict_proba(const struct HdlModel *model,
                                 const double *x,
                                 size_t n,
                                 double *probs,
                                 size_t probs_len);

/**
 * Most likely class of each of `n` samples.
 *
 * # Safety
 * `x` must hold `n * p * t` doubles and `labels` `n` writable slots.
 */
enum HdlStatus hdl_predict(const struct HdlModel *model, const double *x, size_t n, size_t *labels);

/**
 * Deep SHAP contributions of one sample to the `target` logit against
 * `n_background` reference samples.
 *
 * `contributions` receives `p * t` doubles in the caller's feature order;
 * `reference_output` and `sample_output` (either may be NULL) receive the
 * mean background logit and the sample's logit, whose difference equals the
 * sum of the contributions.
 *
 * # Safety
 * Buffers must be valid for the sizes implied by the model's dimensions.
 */
enum HdlStatus hdl_explain(const struct HdlModel *model,
                           const double *sample,
                           const double *background,
                           size_t n_background,
                           size_t target,
                           double *contributions,
                           double *reference_output,
                           double *sample_output);

/**
 * Ward clustering of `n_features` columns (each `n_samples` long, stored
 * one after another) into two groups. Writes the feature permutation to
 * `permutation` and the size of the first group to `boundary`.
 *
 * # Safety
 * `columns` must hold `n_samples * n_features` doubles, `permutation`
 * `n_features` writable slots, and `boundary` must be writable.
 */
enum HdlStatus hdl_ward_order(const double *columns,
                              size_t n_samples,
                              size_t n_features,
                              size_t *permutation,
                              size_t *boundary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HDLCNN_H */
