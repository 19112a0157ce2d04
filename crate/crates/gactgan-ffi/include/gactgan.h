/* C ABI for the gactgan tabular synthesis engine. */

#ifndef GACTGAN_H
#define GACTGAN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned across the ABI boundary. Mirrors the CLI exit
// codes, with `Panic` reserved for internal invariant failures.
enum GactganStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  GACTGAN_STATUS_OK = 0,
  GACTGAN_STATUS_USAGE = 1,
  GACTGAN_STATUS_DATA = 2,
  GACTGAN_STATUS_NUMERIC = 3,
  GACTGAN_STATUS_PANIC = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum GactganStatus GactganStatus;
#else
typedef int32_t GactganStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque handle to a loaded posterior artifact.
typedef struct GactganPosterior GactganPosterior;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message for this thread into `buf` (truncated to
// `len - 1` bytes, always NUL-terminated) and returns the full message
// length in bytes. Passing a null buffer just returns the length.
//
// # Safety
// `buf` must point to at least `len` writable bytes, or be null.
uintptr_t gactgan_last_error(char *buf, uintptr_t len);

// Loads a posterior artifact from disk into an opaque handle.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be a valid
// pointer to a handle slot.
GactganStatus gactgan_posterior_load(const char *path, struct GactganPosterior **out);

// Frees a posterior handle. Passing null is a no-op.
//
// # Safety
// `handle` must have come from `gactgan_posterior_load` and not be freed
// twice.
void gactgan_posterior_free(struct GactganPosterior *handle);

// Number of generator parameters in the posterior (0 for a null handle).
//
// # Safety
// `handle` must be a live handle or null.
uintptr_t gactgan_posterior_param_count(const struct GactganPosterior *handle);

// Number of stored deviation columns (0 for a null handle).
//
// # Safety
// `handle` must be a live handle or null.
uintptr_t gactgan_posterior_rank(const struct GactganPosterior *handle);

// Covariance scale stored in the artifact (NaN for a null handle).
//
// # Safety
// `handle` must be a live handle or null.
double gactgan_posterior_default_alpha(const struct GactganPosterior *handle);

// Synthesizes `n` rows to a CSV file. `alpha < 0` selects the artifact's
// stored scale; `rank < 0` uses every stored deviation column.
//
// # Safety
// `handle` must be a live handle; `out_csv` a valid NUL-terminated path.
GactganStatus gactgan_synthesize_csv(const struct GactganPosterior *handle,
                                     uint64_t n,
                                     uint64_t batch,
                                     uint64_t s_samples,
                                     double alpha,
                                     int64_t rank,
                                     uint64_t seed,
                                     const char *out_csv);

// Infers a column schema from a CSV file and writes it as JSON.
//
// # Safety
// Both pointers must be valid NUL-terminated paths.
GactganStatus gactgan_infer_schema(const char *csv, const char *out_json);

// Trains every (loss, seed) model of an experiment config (idempotent).
//
// # Safety
// `config_json` must be a valid NUL-terminated path.
GactganStatus gactgan_train(const char *config_json);

// Runs a full sweep; `out_dir` (nullable) overrides the config's output
// directory.
//
// # Safety
// `config_json` must be valid; `out_dir` may be null.
GactganStatus gactgan_sweep(const char *config_json, const char *out_dir);

// Evaluates a directory of synthetic CSVs against an original table and
// writes the metrics report.
//
// # Safety
// All pointers must be valid NUL-terminated paths.
GactganStatus gactgan_evaluate(const char *original_csv,
                               const char *synthetic_dir,
                               const char *spec_json,
                               double phi,
                               const char *out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GACTGAN_H */
