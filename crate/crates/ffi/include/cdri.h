#ifndef CDRI_H
#define CDRI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of resilience dimensions in every vector.
#define CDRI_DIMENSION_COUNT 5

// Number of models in every forecast report.
#define CDRI_MODEL_COUNT 6

typedef enum CdriFormat {
  CDRI_FORMAT_MARKDOWN = 0,
  CDRI_FORMAT_CSV = 1,
  CDRI_FORMAT_SPIDER = 2,
  CDRI_FORMAT_BARS = 3,
  CDRI_FORMAT_LOSS = 4,
} CdriFormat;

typedef enum CdriStatus {
  CDRI_STATUS_OK = 0,
  CDRI_STATUS_NULL_POINTER = 1,
  CDRI_STATUS_INVALID_UTF8 = 2,
  CDRI_STATUS_INVALID_ARGUMENT = 3,
  CDRI_STATUS_VALIDATION_FAILED = 4,
  CDRI_STATUS_INVALID_HORIZON = 5,
  CDRI_STATUS_NUMERICAL = 6,
  CDRI_STATUS_OUT_OF_RANGE = 7,
  CDRI_STATUS_PANIC = 99,
} CdriStatus;

// Immutable assessment panel.
typedef struct CdriDataset CdriDataset;

// Immutable forecast report.
typedef struct CdriReport CdriReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread ("" after a
// success). The pointer stays valid until the next call on this thread.
const char *cdri_last_error(void);

// Parses assessment CSV text into a dataset.
//
// # Safety
// `csv_text` must be a NUL-terminated string; `out` must be writable.
enum CdriStatus cdri_dataset_from_csv(const char *csv_text, struct CdriDataset **out);

// Loads a `cdri-dataset/1` JSON archive.
//
// # Safety
// `json_text` must be a NUL-terminated string; `out` must be writable.
enum CdriStatus cdri_dataset_from_json(const char *json_text, struct CdriDataset **out);

// Generates a seeded synthetic panel with the same base, slope and noise
// in every dimension.
//
// # Safety
// `years` must point to `year_count` integers; `out` must be writable.
enum CdriStatus cdri_dataset_synthetic(size_t experts,
                                       const int32_t *years,
                                       size_t year_count,
                                       double base,
                                       double slope,
                                       double noise,
                                       uint64_t seed,
                                       struct CdriDataset **out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must come from a `cdri_dataset_*` constructor and not have
// been freed already.
void cdri_dataset_free(struct CdriDataset *dataset);

// Number of distinct assessment years.
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum CdriStatus cdri_dataset_year_count(const struct CdriDataset *dataset, size_t *out);

// Assessment year at `index` (ascending order).
//
// # Safety
// `dataset` must be a live handle; `out` must be writable.
enum CdriStatus cdri_dataset_year(const struct CdriDataset *dataset, size_t index, int32_t *out);

// Expert-mean vector for `year`, written to `out[0..5]`.
//
// # Safety
// `dataset` must be a live handle; `out` must hold 5 doubles.
enum CdriStatus cdri_aggregate(const struct CdriDataset *dataset, int32_t year, double *out);

// Weighted mean of five parameter scores (weights must sum to 1).
//
// # Safety
// `scores` and `weights` must hold 5 doubles; `out` must be writable.
enum CdriStatus cdri_dimension_score(const double *scores, const double *weights, double *out);

// Overall index of a dimension vector. `weights` may be null for equal
// weights.
//
// # Safety
// `vector` must hold 5 doubles, `weights` 5 doubles or null; `out` must
// be writable.
enum CdriStatus cdri_overall(const double *vector, const double *weights, double *out);

// Fits all six models and forecasts `horizon_year`. `overrides` is an
// optional array of `key=value` hyperparameter strings.
//
// # Safety
// `dataset` must be a live handle; `overrides` must point to
// `override_count` NUL-terminated strings (or be null when the count is
// 0); `out` must be writable.
enum CdriStatus cdri_forecast(const struct CdriDataset *dataset,
                              int32_t horizon_year,
                              uint64_t seed,
                              const char *const *overrides,
                              size_t override_count,
                              struct CdriReport **out);

// Releases a report. Null is ignored.
//
// # Safety
// `report` must come from [`cdri_forecast`] and not have been freed.
void cdri_report_free(struct CdriReport *report);

// Clamped prediction of model `model_index` (table row order) into
// `out[0..5]`; clamp flags into `clamped[0..5]` when not null.
//
// # Safety
// `report` must be a live handle; `out` must hold 5 doubles and
// `clamped` 5 bytes or be null.
enum CdriStatus cdri_report_prediction(const struct CdriReport *report,
                                       size_t model_index,
                                       double *out,
                                       uint8_t *clamped);

// Horizon year of a report.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum CdriStatus cdri_report_horizon(const struct CdriReport *report, int32_t *out);

// Display label of model `model_index` ("Linear Regression", ...), or
// null when out of range. The string is static.
const char *cdri_model_label(size_t model_index);

// Full `cdri-report/1` JSON. Free the result with [`cdri_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum CdriStatus cdri_report_json(const struct CdriReport *report, char **out);

// Renders a table or SVG chart. Free the result with
// [`cdri_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum CdriStatus cdri_report_render(const struct CdriReport *report,
                                   enum CdriFormat format,
                                   char **out);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void cdri_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDRI_H */
