#ifndef STMMC_H
#define STMMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum StmmcStatus {
  STMMC_STATUS_OK = 0,
  STMMC_STATUS_NULL_POINTER = 1,
  STMMC_STATUS_INVALID_ARGUMENT = 2,
  STMMC_STATUS_IO = 3,
  STMMC_STATUS_PARSE = 4,
  STMMC_STATUS_INVALID_DATA = 5,
  STMMC_STATUS_NUMERICAL = 6,
  STMMC_STATUS_BUFFER_TOO_SMALL = 7,
  STMMC_STATUS_PANIC = 8,
} StmmcStatus;

/**
 * Loaded and spot-aligned input modalities.
 */
typedef struct StmmcDataset StmmcDataset;

/**
 * Labels and diagnostics of one pipeline run.
 */
typedef struct StmmcResult StmmcResult;

/**
 * Run options. Obtain defaults with [`stmmc_options_default`].
 */
typedef struct StmmcOptions {
  size_t epochs;
  uint64_t seed;
  size_t n_clusters;
  size_t k_neighbors;
  size_t b_smooth;
  double learning_rate;
  bool use_image_modality;
  bool use_contrastive;
  bool use_smoothing;
} StmmcOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *stmmc_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *stmmc_version(void);

/**
 * Writes the library defaults into `out`. `n_clusters` is left 0 and must be set.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `StmmcOptions`.
 */
enum StmmcStatus stmmc_options_default(struct StmmcOptions *out);

/**
 * Loads expression, coordinates and (optionally, may be null) feature CSVs.
 *
 * # Safety
 * Path arguments must be null or valid nul-terminated strings; `out` must be
 * null or writable.
 */
enum StmmcStatus stmmc_dataset_load(const char *expression_path,
                                    const char *coords_path,
                                    const char *features_path,
                                    struct StmmcDataset **out);

/**
 * Number of spots in a dataset, or 0 for null.
 *
 * # Safety
 * `ds` must be null or a live handle from [`stmmc_dataset_load`].
 */
size_t stmmc_dataset_n_spots(const struct StmmcDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live handle; it is invalid afterwards.
 */
void stmmc_dataset_free(struct StmmcDataset *ds);

/**
 * Trains, clusters and (if enabled) smooths.
 *
 * # Safety
 * `ds` must be a live dataset handle, `opts` readable, `out` writable.
 */
enum StmmcStatus stmmc_run(const struct StmmcDataset *ds,
                           const struct StmmcOptions *opts,
                           struct StmmcResult **out);

/**
 * Number of labelled spots in a result, or 0 for null.
 *
 * # Safety
 * `res` must be null or a live handle from [`stmmc_run`].
 */
size_t stmmc_result_n_spots(const struct StmmcResult *res);

/**
 * Copies final labels (expression-file spot order) into `buf`.
 * Fails with `BUFFER_TOO_SMALL` if `len` is below the spot count.
 *
 * # Safety
 * `res` must be a live handle and `buf` writable for `len` elements.
 */
enum StmmcStatus stmmc_result_labels(const struct StmmcResult *res, uint32_t *buf, size_t len);

/**
 * Like [`stmmc_result_labels`], for the mixture labels before smoothing.
 *
 * # Safety
 * Same as [`stmmc_result_labels`].
 */
enum StmmcStatus stmmc_result_raw_labels(const struct StmmcResult *res, uint32_t *buf, size_t len);

/**
 * # Safety
 * `res` must be null or a live handle; it is invalid afterwards.
 */
void stmmc_result_free(struct StmmcResult *res);

/**
 * Adjusted Rand index of two labelings of length `n`.
 *
 * # Safety
 * `a` and `b` must be readable for `n` elements; `out` writable.
 */
enum StmmcStatus stmmc_ari(const uint32_t *a, const uint32_t *b, size_t n, double *out);

/**
 * Normalized mutual information (arithmetic-mean normalization).
 *
 * # Safety
 * Same as [`stmmc_ari`].
 */
enum StmmcStatus stmmc_nmi(const uint32_t *a, const uint32_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STMMC_H */
