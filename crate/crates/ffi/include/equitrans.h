#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every API call.
 */
typedef enum EqtStatus {
  EqtStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  EqtStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  EqtStatus_InvalidUtf8 = 2,
  /**
   * The checkpoint could not be read or rebuilt into a model.
   */
  EqtStatus_LoadFailed = 3,
  /**
   * A sentence contained a word outside the vocabulary, or was empty.
   */
  EqtStatus_BadSentence = 4,
  /**
   * Beam search exhausted its length budget without terminating.
   */
  EqtStatus_DecodeFailed = 5,
  /**
   * The output buffer is too small; retry with the reported size.
   */
  EqtStatus_BufferTooSmall = 6,
  /**
   * An internal invariant failed.
   */
  EqtStatus_Internal = 7,
} EqtStatus;

/**
 * Opaque model handle: a checkpointed model plus its vocabularies.
 */
typedef struct EqtModel EqtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *eqt_version(void);

/**
 * Static description of a status code.
 */
const char *eqt_status_message(enum EqtStatus status);

/**
 * Load a checkpoint written by the trainer.  On success `*out` owns the
 * handle; release it with `eqt_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EqtStatus eqt_model_load(const char *path, struct EqtModel **out);

/**
 * Release a handle returned by `eqt_model_load`.  Null is a no-op.
 *
 * # Safety
 * `model` must be a pointer from `eqt_model_load`, not yet freed.
 */
void eqt_model_free(struct EqtModel *model);

/**
 * Number of group elements the loaded model is equivariant under.
 *
 * # Safety
 * `model` must be a live handle.
 */
size_t eqt_model_group_order(const struct EqtModel *model);

/**
 * Log-likelihood of an output sentence given an input sentence, both as
 * space-separated words without terminators.
 *
 * # Safety
 * `model` must be a live handle; strings NUL-terminated; `out_ll` valid.
 */
enum EqtStatus eqt_log_likelihood(const struct EqtModel *model,
                                  const char *input,
                                  const char *output,
                                  double *out_ll);

/**
 * Beam-decode an input sentence.  The decoded words are written to
 * `buf` as a NUL-terminated string and `*written` is set to the byte
 * count including the NUL.  When the buffer is too small the status is
 * `BufferTooSmall` and `*written` holds the required size.
 *
 * # Safety
 * `model` must be a live handle; `input` NUL-terminated; `buf` must
 * point to at least `buf_len` writable bytes; `written` must be valid.
 */
enum EqtStatus eqt_decode(const struct EqtModel *model,
                          const char *input,
                          size_t beam_width,
                          size_t max_len,
                          char *buf,
                          size_t buf_len,
                          size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
