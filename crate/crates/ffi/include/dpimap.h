#ifndef DPIMAP_H
#define DPIMAP_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DpimapStatus {
  DPIMAP_STATUS_OK = 0,
  DPIMAP_STATUS_NULL_POINTER = 1,
  DPIMAP_STATUS_INVALID_INPUT = 2,
  DPIMAP_STATUS_NUMERICAL = 3,
  DPIMAP_STATUS_INTERNAL = 4,
  DPIMAP_STATUS_CONFIG = 5,
  DPIMAP_STATUS_BUFFER_TOO_SMALL = 6,
  DPIMAP_STATUS_PANIC = 7,
} DpimapStatus;

/**
 * Padded cost matrix between visual rows and auditory columns.
 */
typedef struct DpimapCostMatrix DpimapCostMatrix;

/**
 * Constant-velocity track with its motion model.
 */
typedef struct DpimapTrack DpimapTrack;

/**
 * Polar detection (m, rad) with noise standard deviations.
 */
typedef struct DpimapPolar {
  double r;
  double theta;
  double phi;
  double sigma_r;
  double sigma_theta;
  double sigma_phi;
} DpimapPolar;

/**
 * Converted Cartesian measurement; `covariance` is row-major 3x3.
 */
typedef struct DpimapConverted {
  double position[3];
  double covariance[9];
  double bias[3];
} DpimapConverted;

/**
 * Summary of one simulation run; undefined rates are NaN.
 */
typedef struct DpimapMetrics {
  uint64_t seed;
  uint64_t events;
  uint64_t received_intended;
  uint64_t received_unintended;
  uint64_t missed_intended;
  uint64_t spared_unintended;
  double hit_rate;
  double disturbance_rate;
  double latency_mean_ms;
  double latency_p90_ms;
  double mapping_accuracy;
  double ad_range_p90_m;
  double vd_range_p90_m;
  double fused_range_p90_m;
} DpimapMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dpimap_version(void);

/**
 * Bytes needed to hold the last error message including the terminator;
 * zero when no error has been recorded on this thread.
 */
size_t dpimap_last_error_length(void);

/**
 * Copies the last error message of this thread into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` bytes.
 */
enum DpimapStatus dpimap_last_error_message(char *buf, size_t len);

/**
 * Clamped cosine similarity of two vectors of length `dim` (at least 2).
 *
 * # Safety
 * `a` and `b` must be valid for `dim` reads, `out` for one write.
 */
enum DpimapStatus dpimap_cosine_similarity(const double *a,
                                           const double *b,
                                           size_t dim,
                                           double *out);

/**
 * Builds a cost matrix from `rows * cols` nonnegative costs.
 *
 * # Safety
 * `costs` must be valid for `rows * cols` reads and `out` for one write.
 */
enum DpimapStatus dpimap_cost_matrix_new(const double *costs,
                                         size_t rows,
                                         size_t cols,
                                         struct DpimapCostMatrix **out);

/**
 * Builds a cost matrix from similarities in `[0, 1]` (cost `1 / s`).
 *
 * # Safety
 * As [`dpimap_cost_matrix_new`].
 */
enum DpimapStatus dpimap_cost_matrix_from_similarities(const double *similarities,
                                                       size_t rows,
                                                       size_t cols,
                                                       struct DpimapCostMatrix **out);

/**
 * # Safety
 * `m` must come from a constructor above and not be freed twice.
 */
void dpimap_cost_matrix_free(struct DpimapCostMatrix *m);

/**
 * Runs the auction and exchange matcher.
 *
 * `visual_to_auditory` receives one entry per row: the matched column or
 * -1. `total_cost` may be null.
 *
 * # Safety
 * `visual_to_auditory` must be valid for as many writes as the matrix has
 * rows.
 */
enum DpimapStatus dpimap_match(const struct DpimapCostMatrix *m,
                               double alpha,
                               double epsilon,
                               int64_t *visual_to_auditory,
                               double *total_cost);

/**
 * Debiased polar-to-Cartesian conversion.
 *
 * # Safety
 * `m` must be valid for one read and `out` for one write.
 */
enum DpimapStatus dpimap_unbiased_convert(const struct DpimapPolar *m, struct DpimapConverted *out);

/**
 * Starts a track at a converted measurement with velocity variance
 * `velocity_var` per axis, step `dt` (s) and process noise `q`.
 *
 * # Safety
 * `z` must be valid for one read and `out` for one write.
 */
enum DpimapStatus dpimap_track_new(const struct DpimapConverted *z,
                                   double velocity_var,
                                   double dt,
                                   double q,
                                   struct DpimapTrack **out);

/**
 * # Safety
 * `t` must come from [`dpimap_track_new`] and not be freed twice.
 */
void dpimap_track_free(struct DpimapTrack *t);

/**
 * Advances the track one step.
 *
 * # Safety
 * `t` must be a live track.
 */
enum DpimapStatus dpimap_track_predict(struct DpimapTrack *t);

/**
 * Corrects the track with a converted measurement; the track is left
 * unchanged on failure.
 *
 * # Safety
 * `t` must be a live track and `z` valid for one read.
 */
enum DpimapStatus dpimap_track_update(struct DpimapTrack *t, const struct DpimapConverted *z);

/**
 * Writes `[p1, p2, p3, v1, v2, v3]` and, when `covariance` is not null,
 * the row-major 6x6 covariance.
 *
 * # Safety
 * `state` must be valid for 6 writes and `covariance`, if set, for 36.
 */
enum DpimapStatus dpimap_track_state(const struct DpimapTrack *t,
                                     double *state,
                                     double *covariance);

/**
 * Runs one simulation from a TOML configuration (same keys as the CLI
 * config file; environment overrides are not applied).
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` valid for one
 * write.
 */
enum DpimapStatus dpimap_simulate(const char *config_toml, struct DpimapMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPIMAP_H */
