#ifndef SUPMIX_H
#define SUPMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SupmixStatus {
  SUPMIX_STATUS_OK = 0,
  SUPMIX_STATUS_NULL_POINTER = 1,
  SUPMIX_STATUS_INVALID_UTF8 = 2,
  SUPMIX_STATUS_IO = 3,
  SUPMIX_STATUS_DATA = 4,
  SUPMIX_STATUS_NUMERIC = 5,
  SUPMIX_STATUS_DIMENSION = 6,
  SUPMIX_STATUS_BUFFER_TOO_SMALL = 7,
  SUPMIX_STATUS_NO_MIXTURE = 8,
  SUPMIX_STATUS_PANIC = 9,
} SupmixStatus;

// A loaded target model together with its static vectors and sources.
typedef struct SupmixModel SupmixModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads the model file at `path` and the static vectors and sources it
// references. On success `*out` owns a handle to release with
// [`supmix_model_free`].
//
// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum SupmixStatus supmix_model_load(const char *path, struct SupmixModel **out);

// Releases a handle from [`supmix_model_load`]. Null is ignored.
//
// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void supmix_model_free(struct SupmixModel *model);

// Number of output labels.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum SupmixStatus supmix_model_num_labels(const struct SupmixModel *model, size_t *out);

// Label `index` as a C string owned by the model, or null when out of range.
//
// # Safety
// `model` must be null or a live handle.
const char *supmix_model_label(const struct SupmixModel *model, size_t index);

// Number of mixed sources; 0 for a static-only model.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum SupmixStatus supmix_model_num_sources(const struct SupmixModel *model, size_t *out);

// Source name `index` as a C string owned by the model, or null when out of range.
//
// # Safety
// `model` must be null or a live handle.
const char *supmix_model_source_name(const struct SupmixModel *model, size_t index);

// Tags one sentence of `len` tokens, writing a label index per token to
// `out_labels` (capacity `len`).
//
// # Safety
// `tokens` must point to `len` valid C strings and `out_labels` to `len`
// writable elements.
enum SupmixStatus supmix_model_tag(const struct SupmixModel *model,
                                   const char *const *tokens,
                                   size_t len,
                                   size_t *out_labels);

// Writes the mixture weights (in source order) to `out`, which holds `cap`
// values, and the scale to `*gamma` when `gamma` is not null.
//
// # Safety
// `out` must point to `cap` writable values; `gamma` must be null or valid.
enum SupmixStatus supmix_model_mix_weights(const struct SupmixModel *model,
                                           double *out,
                                           size_t cap,
                                           double *gamma);

// Softmax of `k` logits into `out`.
//
// # Safety
// `logits` must point to `k` values and `out` to `k` writable values.
enum SupmixStatus supmix_softmax_weights(const double *logits, size_t k, double *out);

// Span precision, recall and F1 (fractions in `[0, 1]`) of two corpora in
// tab-separated `token<TAB>tag` form.
//
// # Safety
// The texts must be valid C strings; each output must be null or valid.
enum SupmixStatus supmix_span_f1(const char *gold_conll,
                                 const char *pred_conll,
                                 double *precision,
                                 double *recall,
                                 double *f1);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *supmix_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUPMIX_H */
