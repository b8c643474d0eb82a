#ifndef CV2X_SIM_H
#define CV2X_SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Cv2xStatus {
  CV2X_STATUS_OK = 0,
  CV2X_STATUS_NULL_POINTER = 1,
  CV2X_STATUS_INVALID_UTF8 = 2,
  /*
   The configuration failed to parse or validate.
   */
  CV2X_STATUS_INVALID_CONFIG = 3,
  /*
   Index or argument out of range.
   */
  CV2X_STATUS_OUT_OF_RANGE = 4,
  /*
   The requested statistic has no samples.
   */
  CV2X_STATUS_NO_DATA = 5,
  /*
   Any other simulator error.
   */
  CV2X_STATUS_FAILED = 6,
  /*
   A panic was caught at the boundary.
   */
  CV2X_STATUS_PANIC = 7,
} Cv2xStatus;

/*
 Which gap statistic to read.
 */
typedef enum Cv2xMetric {
  CV2X_METRIC_INTER_PACKET_GAP = 0,
  CV2X_METRIC_INFORMATION_AGE = 1,
} Cv2xMetric;

/*
 A validated simulation configuration.
 */
typedef struct Cv2xConfig Cv2xConfig;

/*
 Accumulated metrics of one or more runs.
 */
typedef struct Cv2xMetrics Cv2xMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *cv2x_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *cv2x_last_error_message(void);

/*
 Reference highway scenario with all defaults.

 # Safety
 `out` must be valid for writes.
 */
enum Cv2xStatus cv2x_config_default(struct Cv2xConfig **out);

/*
 Parses and validates a TOML config document.

 # Safety
 `toml` must be a NUL-terminated string and `out` valid for writes.
 */
enum Cv2xStatus cv2x_config_from_toml(const char *toml, struct Cv2xConfig **out);

/*
 # Safety
 `config` must come from this library and not be used afterwards. NULL is
 ignored.
 */
void cv2x_config_free(struct Cv2xConfig *config);

/*
 Runs the scenario once per seed and merges the results.

 # Safety
 `seeds` must point to `n_seeds` values; `out` must be valid for writes.
 */
enum Cv2xStatus cv2x_run(const struct Cv2xConfig *config,
                         const uint64_t *seeds,
                         size_t n_seeds,
                         struct Cv2xMetrics **out);

/*
 Adds the samples of `other` to `into`. Both must use the same distance bins.

 # Safety
 Both handles must come from this library.
 */
enum Cv2xStatus cv2x_metrics_merge(struct Cv2xMetrics *into, const struct Cv2xMetrics *other);

/*
 # Safety
 `metrics` must come from this library and not be used afterwards. NULL is
 ignored.
 */
void cv2x_metrics_free(struct Cv2xMetrics *metrics);

/*
 Number of IPG/IA distance bins.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_bin_count(const struct Cv2xMetrics *m, size_t *out);

/*
 Centre of distance bin `bin`, metres.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_bin_center(const struct Cv2xMetrics *m, size_t bin, double *out);

/*
 Packet reception ratio in the 1 m bin containing `distance_m`.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_prr(const struct Cv2xMetrics *m, double distance_m, double *out);

/*
 99.9th percentile (nearest rank) of a gap statistic in bin `bin`, ms.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_p999(const struct Cv2xMetrics *m,
                                  enum Cv2xMetric metric,
                                  size_t bin,
                                  uint64_t *out);

/*
 Fraction of samples in bin `bin` exceeding `i_ms`.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_ccdf(const struct Cv2xMetrics *m,
                                  enum Cv2xMetric metric,
                                  size_t bin,
                                  uint64_t i_ms,
                                  double *out);

/*
 Time-averaged channel busy ratio of the reporting vehicles.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_mean_cbr(const struct Cv2xMetrics *m, double *out);

/*
 Mean BSM generation interval in the statistics region, ms.

 # Safety
 `m` must be a valid handle; `out` valid for writes.
 */
enum Cv2xStatus cv2x_metrics_mean_interval(const struct Cv2xMetrics *m, double *out);

/*
 Mean relative CCDF reduction of `variant` against `base` over
 `[from_ms, to_ms]` in bin `bin`.

 # Safety
 Both handles must be valid; `out` valid for writes.
 */
enum Cv2xStatus cv2x_tail_improvement(const struct Cv2xMetrics *base,
                                      const struct Cv2xMetrics *variant,
                                      enum Cv2xMetric metric,
                                      size_t bin,
                                      uint64_t from_ms,
                                      uint64_t to_ms,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CV2X_SIM_H */
