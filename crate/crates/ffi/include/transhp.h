#ifndef TRANSHP_H
#define TRANSHP_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum TranshpStatus {
  TRANSHP_STATUS_OK = 0,
  TRANSHP_STATUS_NULL_POINTER = 1,
  TRANSHP_STATUS_INVALID_ARGUMENT = 2,
  TRANSHP_STATUS_IO = 3,
  TRANSHP_STATUS_FORMAT = 4,
  TRANSHP_STATUS_VALIDATION = 5,
  TRANSHP_STATUS_NUMERIC = 6,
  TRANSHP_STATUS_PANIC = 7,
} TranshpStatus;

// Opaque label hierarchy.
typedef struct TranshpHierarchy TranshpHierarchy;

// Opaque trained model (single precision).
typedef struct TranshpModel TranshpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *transhp_last_error(void);

// Loads a hierarchy text file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TranshpStatus transhp_hierarchy_load(const char *path, struct TranshpHierarchy **out);

// # Safety
// `h` must come from [`transhp_hierarchy_load`] and not be used afterwards.
void transhp_hierarchy_free(struct TranshpHierarchy *h);

// Number of fine classes and coarse levels.
//
// # Safety
// All pointers must be valid.
enum TranshpStatus transhp_hierarchy_shape(const struct TranshpHierarchy *h,
                                           size_t *fine_count,
                                           size_t *level_count);

// Coarse ancestor of `fine` at `level`.
//
// # Safety
// All pointers must be valid.
enum TranshpStatus transhp_hierarchy_ancestor(const struct TranshpHierarchy *h,
                                              size_t fine,
                                              size_t level,
                                              size_t *out);

// Loads a checkpoint written by `transhp train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum TranshpStatus transhp_model_load(const char *path, struct TranshpModel **out);

// # Safety
// `m` must come from [`transhp_model_load`] and not be used afterwards.
void transhp_model_free(struct TranshpModel *m);

// Image side length and fine class count the model expects.
//
// # Safety
// All pointers must be valid.
enum TranshpStatus transhp_model_shape(const struct TranshpModel *m,
                                       size_t *image_size,
                                       size_t *fine_count);

// Total parameter count and the part added by prompting.
//
// # Safety
// All pointers must be valid.
enum TranshpStatus transhp_model_count_params(const struct TranshpModel *m,
                                              size_t *total,
                                              size_t *added_by_prompting);

// Fine-class logits for `count` images.
//
// `pixels` holds `count` images of `3·S·S` bytes each (channel-major, rows
// of S pixels, S = image size). `logits` receives `count·F` values and
// `logits_len` must be at least that.
//
// # Safety
// `pixels` must point to `count·3·S·S` readable bytes and `logits` to
// `logits_len` writable floats.
enum TranshpStatus transhp_model_forward(const struct TranshpModel *m,
                                         const uint8_t *pixels,
                                         size_t count,
                                         float *logits,
                                         size_t logits_len);

// Head-averaged attention mass each of the first `n_feature` query tokens
// puts on each of the last `m` keys.
//
// `attention` is `heads × T × T` row-major probabilities with
// `T = n_feature + m`; `out` receives `n_feature × m` values.
//
// # Safety
// `attention` must point to `heads·T·T` readable doubles and `out` to
// `n_feature·m` writable doubles.
enum TranshpStatus transhp_absorption_weights(const double *attention,
                                              size_t heads,
                                              size_t n_feature,
                                              size_t m,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRANSHP_H */
