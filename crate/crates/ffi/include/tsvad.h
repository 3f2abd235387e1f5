/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef TSVAD_H
#define TSVAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsvadStatus {
  TSVAD_STATUS_OK = 0,
  TSVAD_STATUS_INVALID_ARGUMENT = 1,
  TSVAD_STATUS_FORMAT = 2,
  TSVAD_STATUS_IO = 3,
  TSVAD_STATUS_NUMERIC = 4,
  TSVAD_STATUS_INVALID_STATE = 5,
  TSVAD_STATUS_UNDEFINED_METRIC = 6,
  TSVAD_STATUS_SPEC = 7,
  TSVAD_STATUS_NULL_POINTER = 8,
  TSVAD_STATUS_PANIC = 9,
} TsvadStatus;

/*
 Trained hash encoder.
 */
typedef struct TsvadEncoder TsvadEncoder;

/*
 Knowledge base of hashed normal events.
 */
typedef struct TsvadKnowledgeBase TsvadKnowledgeBase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *tsvad_last_error(void);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsvadStatus tsvad_encoder_load(const char *path, struct TsvadEncoder **out);

/*
 # Safety
 `encoder` must come from [`tsvad_encoder_load`] and not be freed twice. Null is ignored.
 */
void tsvad_encoder_free(struct TsvadEncoder *encoder);

/*
 Input dimension `D`, number of hash layers `B` and code length `R`.

 # Safety
 All pointers must be valid.
 */
enum TsvadStatus tsvad_encoder_dims(const struct TsvadEncoder *encoder,
                                    size_t *input_dim,
                                    size_t *num_tables,
                                    size_t *code_len);

/*
 Writes the `B x R` real-valued codes of one feature vector, layer by layer.

 # Safety
 `features` must hold `len` values and `codes` room for `codes_len` values.
 */
enum TsvadStatus tsvad_encoder_encode(const struct TsvadEncoder *encoder,
                                      const double *features,
                                      size_t len,
                                      double *codes,
                                      size_t codes_len);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TsvadStatus tsvad_kb_load(const char *path, struct TsvadKnowledgeBase **out);

/*
 # Safety
 `kb` must come from [`tsvad_kb_load`] and not be freed twice. Null is ignored.
 */
void tsvad_kb_free(struct TsvadKnowledgeBase *kb);

/*
 Anomaly score of one snippet: the smallest distance to a stored
 representation over all tables, or `sqrt(R)` when every table misses.

 # Safety
 `features` must hold `len` values; other pointers must be valid.
 */
enum TsvadStatus tsvad_kb_retrieve_score(const struct TsvadKnowledgeBase *kb,
                                         const struct TsvadEncoder *encoder,
                                         const double *features,
                                         size_t len,
                                         double *score);

/*
 Maximum local error of a row-major `height x width` error map, using
 window means (`use_window_max == 0`) or window maxima.

 # Safety
 `values` must hold `height * width` values and `result` be valid.
 */
enum TsvadStatus tsvad_mle(const double *values,
                           size_t height,
                           size_t width,
                           size_t k,
                           size_t stride,
                           int32_t use_window_max,
                           double *result);

/*
 Area under the ROC curve with half credit for ties.

 # Safety
 `scores` and `labels` must hold `n` values and `result` be valid.
 */
enum TsvadStatus tsvad_roc_auc(const double *scores,
                               const uint8_t *labels,
                               size_t n,
                               double *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSVAD_H */
