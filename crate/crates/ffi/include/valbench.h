#ifndef VALBENCH_H
#define VALBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VbStatus {
  VB_STATUS_OK = 0,
  VB_STATUS_NULL_POINTER = 1,
  VB_STATUS_INVALID_UTF8 = 2,
  VB_STATUS_IO = 3,
  VB_STATUS_INVALID_DATA = 4,
  VB_STATUS_UNKNOWN_VARIANT = 5,
  VB_STATUS_SCORE_FAILED = 6,
  VB_STATUS_DEGENERATE_INPUT = 7,
  VB_STATUS_BUFFER_TOO_SMALL = 8,
  VB_STATUS_OUT_OF_RANGE = 9,
  VB_STATUS_PANIC = 10,
} VbStatus;

/**
 * A loaded checkpoint.
 */
typedef struct VbCheckpoint VbCheckpoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` and returns the
 * buffer size it needs (including the NUL). Pass a null `buf` to query.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t vb_last_error_message(char *buf, size_t len);

/**
 * Loads the checkpoint directory at `path` into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VbStatus vb_checkpoint_load(const char *path, struct VbCheckpoint **out);

/**
 * Releases a handle from [`vb_checkpoint_load`]. Null is ignored.
 *
 * # Safety
 * `handle` must come from [`vb_checkpoint_load`] and not be freed twice.
 */
void vb_checkpoint_free(struct VbCheckpoint *handle);

/**
 * # Safety
 * `handle` must be a live handle and `out` a valid pointer.
 */
enum VbStatus vb_checkpoint_num_classes(const struct VbCheckpoint *handle, size_t *out);

/**
 * Target accuracy from the stored target labels.
 *
 * # Safety
 * `handle` must be a live handle and `out` a valid pointer.
 */
enum VbStatus vb_checkpoint_target_accuracy(const struct VbCheckpoint *handle, double *out);

/**
 * Number of validator variants in the registry.
 */
size_t vb_variant_count(void);

/**
 * Writes the canonical name of variant `index` into `buf`; `*needed`
 * receives the size including the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes; `needed` may be null.
 */
enum VbStatus vb_variant_name(size_t index, char *buf, size_t len, size_t *needed);

/**
 * Scores one variant, given by canonical name, on a checkpoint.
 *
 * # Safety
 * `handle` must be live, `name` NUL-terminated, outputs valid pointers.
 */
enum VbStatus vb_score_variant(const struct VbCheckpoint *handle,
                               const char *name,
                               uint64_t seed,
                               double *out_raw,
                               double *out_oriented);

/**
 * Weighted Spearman correlation (×100) of `n` score/accuracy pairs.
 *
 * # Safety
 * `scores` and `accuracies` must be valid for `n` reads, `out` for a write.
 */
enum VbStatus vb_weighted_spearman(const double *scores,
                                   const double *accuracies,
                                   size_t n,
                                   double *out);

/**
 * Spearman correlation (×100) of `n` pairs.
 *
 * # Safety
 * `x` and `y` must be valid for `n` reads, `out` for a write.
 */
enum VbStatus vb_spearman(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALBENCH_H */
