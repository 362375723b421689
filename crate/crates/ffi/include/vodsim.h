#ifndef VODSIM_H
#define VODSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VodsimStatus {
  VODSIM_STATUS_OK = 0,
  VODSIM_STATUS_NULL_ARGUMENT = 1,
  VODSIM_STATUS_INVALID_UTF8 = 2,
  VODSIM_STATUS_CONFIG = 3,
  VODSIM_STATUS_SIMULATION = 4,
  VODSIM_STATUS_IO = 5,
  VODSIM_STATUS_OUT_OF_RANGE = 6,
  VODSIM_STATUS_PANIC = 7,
} VodsimStatus;

/*
 Parsed run configuration.
 */
typedef struct VodsimConfig VodsimConfig;

/*
 Result of one simulation run.
 */
typedef struct VodsimReport VodsimReport;

typedef struct VodsimSample {
  double time;
  double buffer_utilization;
  double hit_ratio;
  uint64_t prefixes_buffered;
  uint64_t concurrent_users;
  uint64_t rejections;
  double mean_startup_latency;
} VodsimSample;

typedef struct VodsimSummary {
  uint64_t seed;
  uint64_t requests;
  uint64_t events_dispatched;
  double final_hit_ratio;
  double peak_utilization;
  uint64_t peak_prefixes;
  uint64_t peak_concurrent_users;
  uint64_t rejections;
} VodsimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. The pointer is
 valid until the next failing call on the same thread.
 */
const char *vodsim_last_error(void);

/*
 Static name of a status code.
 */
const char *vodsim_status_name(enum VodsimStatus status);

/*
 New configuration with every default.
 */
struct VodsimConfig *vodsim_config_new(void);

/*
 Parses `key = value` text into a new configuration.

 # Safety
 `text` must be a nul-terminated string and `out` a writable pointer.
 */
enum VodsimStatus vodsim_config_parse(const char *text, struct VodsimConfig **out);

/*
 Sets one key, with the same names and ranges as the config file.

 # Safety
 `cfg` must come from this library; `key` and `value` must be
 nul-terminated strings.
 */
enum VodsimStatus vodsim_config_set(struct VodsimConfig *cfg, const char *key, const char *value);

/*
 # Safety
 `cfg` must come from this library and not be used afterwards. Null is
 ignored.
 */
void vodsim_config_free(struct VodsimConfig *cfg);

/*
 Runs one simulation with the given seed. Cross-field checks on the
 configuration happen here.

 # Safety
 `cfg` must come from this library and `out` must be writable.
 */
enum VodsimStatus vodsim_run(const struct VodsimConfig *cfg,
                             uint64_t seed,
                             struct VodsimReport **out);

/*
 Number of metric samples; 0 for a null report.

 # Safety
 `report` must come from this library or be null.
 */
size_t vodsim_report_sample_count(const struct VodsimReport *report);

/*
 # Safety
 `report` must come from this library and `out` must be writable.
 */
enum VodsimStatus vodsim_report_sample(const struct VodsimReport *report,
                                       size_t index,
                                       struct VodsimSample *out);

/*
 # Safety
 `report` must come from this library and `out` must be writable.
 */
enum VodsimStatus vodsim_report_summary(const struct VodsimReport *report,
                                        struct VodsimSummary *out);

/*
 Writes the metrics trace as CSV.

 # Safety
 `report` must come from this library; `path` must be a nul-terminated
 string.
 */
enum VodsimStatus vodsim_report_write_csv(const struct VodsimReport *report, const char *path);

/*
 # Safety
 `report` must come from this library and not be used afterwards. Null is
 ignored.
 */
void vodsim_report_free(struct VodsimReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VODSIM_H */
