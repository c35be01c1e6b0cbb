#ifndef LOOPHOLE_H
#define LOOPHOLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LoopholeStatus {
  LOOPHOLE_STATUS_OK = 0,
  LOOPHOLE_STATUS_NULL_POINTER = 1,
  LOOPHOLE_STATUS_INVALID_ARGUMENT = 2,
  LOOPHOLE_STATUS_IO = 3,
  LOOPHOLE_STATUS_PARSE = 4,
  LOOPHOLE_STATUS_NOT_FOUND = 5,
  LOOPHOLE_STATUS_SIGNAL = 6,
  LOOPHOLE_STATUS_PANIC = 7,
} LoopholeStatus;

/*
 Opaque list of breathing estimates.
 */
typedef struct LoopholeEstimates LoopholeEstimates;

/*
 Opaque simulation report.
 */
typedef struct LoopholeSimReport LoopholeSimReport;

/*
 Opaque CSI trace.
 */
typedef struct LoopholeTrace LoopholeTrace;

/*
 One sliding-window breathing estimate. `rate_bpm` is -1 when nothing was detected.
 */
typedef struct LoopholeEstimate {
  double window_start_s;
  double window_end_s;
  double rate_bpm;
  double weight;
} LoopholeEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread. Empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *loophole_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *loophole_version(void);

/*
 On-air size in bytes of a frame kind such as "null", "rts" or "bar".

 # Safety
 `kind` must be a NUL-terminated string; `out` must be writable.
 */
enum LoopholeStatus loophole_frame_size(const char *kind, uint32_t *out);

/*
 Airtime in microseconds of one frame. A null `band` means 2.4 GHz.

 # Safety
 String arguments must be NUL-terminated or null where allowed; `out` must be writable.
 */
enum LoopholeStatus loophole_airtime_us(const char *kind,
                                        double bitrate_mbps,
                                        const char *band,
                                        double *out);

/*
 Duration in microseconds of one saturated query and response exchange.

 # Safety
 As for [`loophole_airtime_us`].
 */
enum LoopholeStatus loophole_exchange_cycle_us(const char *kind,
                                               double bitrate_mbps,
                                               const char *band,
                                               double *out);

/*
 Minutes until `fraction` of the named battery is drained by a saturating flood.

 # Safety
 String arguments must be NUL-terminated; `band` may be null; `out` must be writable.
 */
enum LoopholeStatus loophole_drain_minutes(const char *kind,
                                           double bitrate_mbps,
                                           const char *device,
                                           const char *battery,
                                           double fraction,
                                           const char *band,
                                           double *out);

/*
 Reads a CSI trace from a CSV file.

 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum LoopholeStatus loophole_trace_read(const char *path, struct LoopholeTrace **out);

/*
 Synthesizes a trace from scenario TOML text with a `[breath]` section.

 # Safety
 `scenario_toml` must be NUL-terminated; `out` must be writable.
 */
enum LoopholeStatus loophole_trace_synth(const char *scenario_toml,
                                         uint64_t seed,
                                         struct LoopholeTrace **out);

/*
 Number of samples in a trace; 0 for null.

 # Safety
 `trace` must be null or a live handle.
 */
size_t loophole_trace_len(const struct LoopholeTrace *trace);

/*
 # Safety
 `trace` must be null or a handle not yet freed.
 */
void loophole_trace_free(struct LoopholeTrace *trace);

/*
 Runs the sliding-window breathing estimator with default settings.

 # Safety
 `trace` must be a live handle; `out` must be writable.
 */
enum LoopholeStatus loophole_sense(const struct LoopholeTrace *trace,
                                   struct LoopholeEstimates **out);

/*
 # Safety
 `est` must be null or a live handle.
 */
size_t loophole_estimates_len(const struct LoopholeEstimates *est);

/*
 Copies estimate `index` into `out`.

 # Safety
 `est` must be a live handle; `out` must be writable.
 */
enum LoopholeStatus loophole_estimates_get(const struct LoopholeEstimates *est,
                                           size_t index,
                                           struct LoopholeEstimate *out);

/*
 # Safety
 `est` must be null or a handle not yet freed.
 */
void loophole_estimates_free(struct LoopholeEstimates *est);

/*
 Runs a simulation described by scenario TOML text.

 # Safety
 `scenario_toml` must be NUL-terminated; `out` must be writable.
 */
enum LoopholeStatus loophole_simulate(const char *scenario_toml, struct LoopholeSimReport **out);

/*
 Awake share of a station's simulated time. A null `mac` selects the attack target.

 # Safety
 `report` must be a live handle; `mac` null or NUL-terminated; `out` writable.
 */
enum LoopholeStatus loophole_sim_awake_fraction(const struct LoopholeSimReport *report,
                                                const char *mac,
                                                double *out);

/*
 Share of delivered queries the target answered.

 # Safety
 `report` must be a live handle; `out` must be writable.
 */
enum LoopholeStatus loophole_sim_response_ratio(const struct LoopholeSimReport *report,
                                                double *out);

/*
 # Safety
 `report` must be null or a handle not yet freed.
 */
void loophole_sim_free(struct LoopholeSimReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOOPHOLE_H */
