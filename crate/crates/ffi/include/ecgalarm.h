#ifndef ECGALARM_H
#define ECGALARM_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EA_OK 0

// A required pointer argument was null.
#define EA_ERR_NULL 1

// An argument is out of range or has the wrong dimension.
#define EA_ERR_INVALID 2

// The output buffer is smaller than the result.
#define EA_ERR_BUFFER 3

#define EA_ERR_IO 4

// A file or model could not be parsed.
#define EA_ERR_PARSE 5

// The input is empty or too short.
#define EA_ERR_EMPTY 6

// Both classes are required.
#define EA_ERR_CLASS 7

#define EA_ERR_PANIC 8

#define EA_ERR_INTERNAL 9

#define EA_METRIC_CITYBLOCK 0

#define EA_METRIC_SQEUCLIDEAN 1

// Opaque handle to a loaded model.
typedef struct EaModel EaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next `ea_*` call on the same thread.
const char *ea_last_error(void);

size_t ea_hlf_len(void);

size_t ea_llf_len(void);

size_t ea_dwt_len(void);

// R-peak sample indices at 250 Hz. `*out_len` receives the peak count even
// when `out` is too small.
//
// # Safety
// `samples` must point to `n` doubles and `out` to `cap` writable `size_t`.
int32_t ea_detect_r_peaks(const double *samples,
                          size_t n,
                          double fs,
                          size_t *out,
                          size_t cap,
                          size_t *out_len);

// The 31 high-level features. `alarm_type` is 0..5 for ASY, EBR, ETC, VTA,
// VFB; `metric` is one of `EA_METRIC_*`.
//
// # Safety
// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
int32_t ea_hlf_features(const double *samples,
                        size_t n,
                        double fs,
                        int32_t alarm_type,
                        int32_t metric,
                        uint64_t seed,
                        double *out,
                        size_t cap);

// The 588 features of the last seven segments, zero-padded.
//
// # Safety
// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
int32_t ea_llf_features(const double *samples, size_t n, double fs, double *out, size_t cap);

// The 120 wavelet features. Needs at least 64 samples after resampling.
//
// # Safety
// `samples` must point to `n` doubles and `out` to `cap` writable doubles.
int32_t ea_dwt_features(const double *samples, size_t n, double fs, double *out, size_t cap);

// Loads a model file written by the pipeline. Free with `ea_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
int32_t ea_model_load(const char *path, struct EaModel **out);

// Feature count the model expects, 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle from `ea_model_load`.
size_t ea_model_n_features(const struct EaModel *model);

// Ensemble score; positive means true alarm.
//
// # Safety
// `model` must be a live handle, `x` must point to `n` doubles and `score`
// must be writable.
int32_t ea_model_score(const struct EaModel *model, const double *x, size_t n, double *score);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle from `ea_model_load` not yet freed.
void ea_model_free(struct EaModel *model);

// Area under the ROC curve. `labels` holds 1 for a true alarm, 0 otherwise.
//
// # Safety
// `labels` and `scores` must point to `n` elements; `auc` must be writable.
int32_t ea_roc_auc(const int32_t *labels, const double *scores, size_t n, double *auc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECGALARM_H */
