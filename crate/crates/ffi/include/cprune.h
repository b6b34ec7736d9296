#ifndef CPRUNE_H
#define CPRUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Which part of a dataset to read.
typedef enum CpSplit {
  CP_SPLIT_TRAIN = 0,
  CP_SPLIT_VALIDATION = 1,
  CP_SPLIT_TEST = 2,
} CpSplit;

// Result of every fallible call. `CP_STATUS_OK` is zero.
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  // A required pointer argument was null.
  CP_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  CP_STATUS_INVALID_UTF8 = 2,
  CP_STATUS_CONFIG = 3,
  CP_STATUS_SHAPE = 4,
  CP_STATUS_INDEX = 5,
  CP_STATUS_DOMAIN = 6,
  CP_STATUS_NUMERICS = 7,
  CP_STATUS_FORMAT = 8,
  CP_STATUS_IO = 9,
  CP_STATUS_NOTHING_TO_PRUNE = 10,
  CP_STATUS_INSUFFICIENT_DATA = 11,
  // A Rust panic was caught; the handles involved are left as they were
  // when it happened.
  CP_STATUS_PANIC = 12,
} CpStatus;

// Train, validation and test splits loaded together.
typedef struct CpDataset CpDataset;

// An owned model; f32 weights.
typedef struct CpModel CpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL if none failed.
// The pointer stays valid until the next failing call on the same thread.
const char *cp_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` is NULL or a string returned by this library and not yet freed.
void cp_string_free(char *s);

// Reads a model file.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum CpStatus cp_model_load(const char *path, struct CpModel **out);

// Builds a freshly initialized built-in architecture (`"A"`, `"B"` or
// `"C"`) for `rows x cols x channels` inputs.
//
// # Safety
// `name` is a NUL-terminated string; `out` is writable.
enum CpStatus cp_model_build(const char *name,
                             size_t rows,
                             size_t cols,
                             size_t channels,
                             size_t classes,
                             uint64_t seed,
                             struct CpModel **out);

// Writes a model file.
//
// # Safety
// `model` is a live handle; `path` is a NUL-terminated string.
enum CpStatus cp_model_save(const struct CpModel *model, const char *path);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` is NULL or a live handle, which must not be used afterwards.
void cp_model_free(struct CpModel *model);

// Number of trainable parameters.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum CpStatus cp_model_param_count(const struct CpModel *model, uint64_t *out);

// Input shape as `{rows, cols, channels}`.
//
// # Safety
// `model` is a live handle; `out` points to 3 writable elements.
enum CpStatus cp_model_input_shape(const struct CpModel *model, size_t *out);

// Width of one output row (the class count for a classifier).
//
// # Safety
// `model` is a live handle; `out` is writable.
enum CpStatus cp_model_output_width(const struct CpModel *model, size_t *out);

// Multiply-accumulate FLOPs of one forward pass of one sample.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum CpStatus cp_model_flops(const struct CpModel *model, uint64_t *out);

// Inference on `n` samples laid out `(n, rows, cols, channels)` row-major.
// Writes `n * output_width` probabilities to `outputs`; `outputs_len` must
// equal that count.
//
// # Safety
// `inputs` holds `n * rows * cols * channels` readable floats; `outputs`
// holds `outputs_len` writable floats.
enum CpStatus cp_model_forward(const struct CpModel *model,
                               const float *inputs,
                               size_t n,
                               float *outputs,
                               size_t outputs_len);

// Prunes `model` in place: filters scoring strictly below `threshold`
// under `criterion` (e.g. `"std:rank"`) are removed. `kinds` is `"conv"`,
// `"dense"` or `"both"`; NULL means both. When `report_json` is not NULL
// it receives the pruning report, to be released with [`cp_string_free`].
// On failure the model is unchanged.
//
// # Safety
// `model` is a live handle; string arguments are NUL-terminated or NULL
// where allowed; `report_json` is NULL or writable.
enum CpStatus cp_model_prune(struct CpModel *model,
                             const char *criterion,
                             double threshold,
                             const char *kinds,
                             bool progressive,
                             bool protect_output_layer,
                             char **report_json);

// Loads a dataset. `source` is `mnist:<dir>` or `cifar10:<dir or batch
// file>`; the last `validation` training samples are held out.
//
// # Safety
// `source` is a NUL-terminated string; `out` is writable.
enum CpStatus cp_dataset_load(const char *source, size_t validation, struct CpDataset **out);

// Releases a dataset. NULL is ignored.
//
// # Safety
// `dataset` is NULL or a live handle, which must not be used afterwards.
void cp_dataset_free(struct CpDataset *dataset);

// Number of samples in one split.
//
// # Safety
// `dataset` is a live handle; `out` is writable.
enum CpStatus cp_dataset_len(const struct CpDataset *dataset, enum CpSplit split, size_t *out);

// Top-1 accuracy and mean cross-entropy of `model` on one split. Either
// out-pointer may be NULL.
//
// # Safety
// `model` and `dataset` are live handles; out-pointers are NULL or
// writable.
enum CpStatus cp_evaluate(const struct CpModel *model,
                          const struct CpDataset *dataset,
                          enum CpSplit split,
                          double *accuracy,
                          double *mean_loss);

// Sweeps the pruning threshold of `criterion` over the model's score range
// and writes the area under the accuracy curve to `auc`. The metric is
// validation accuracy on `per_class` samples per class drawn with `seed`,
// or on the whole validation split when `per_class` is 0. `model` is not
// modified. When `curve_csv` is not NULL it receives the sampled curve as
// CSV, to be released with [`cp_string_free`].
//
// # Safety
// `model` and `dataset` are live handles; `criterion` is NUL-terminated;
// `kinds` is NULL or NUL-terminated; `auc` is writable; `curve_csv` is NULL
// or writable.
enum CpStatus cp_sweep(const struct CpModel *model,
                       const struct CpDataset *dataset,
                       const char *criterion,
                       const char *kinds,
                       double max_gap,
                       size_t max_evals,
                       size_t per_class,
                       uint64_t seed,
                       double *auc,
                       char **curve_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPRUNE_H */
