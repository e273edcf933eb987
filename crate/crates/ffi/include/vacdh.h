#ifndef VACDH_H
#define VACDH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Request kind codes returned by [`vacdh_report_request`].
#define VACDH_KIND_HIT 0

#define VACDH_KIND_MISS 1

#define VACDH_KIND_DELAYED_HIT 2

typedef enum VacdhPolicyKind {
  VACDH_POLICY_KIND_LRU = 0,
  VACDH_POLICY_KIND_LRU_MAD = 1,
  VACDH_POLICY_KIND_LAC = 2,
  VACDH_POLICY_KIND_CALA = 3,
  VACDH_POLICY_KIND_VA_CDH = 4,
} VacdhPolicyKind;

// Result of every fallible call.
typedef enum VacdhStatus {
  VACDH_STATUS_OK = 0,
  VACDH_STATUS_NULL_POINTER = 1,
  VACDH_STATUS_INVALID_ARGUMENT = 2,
  VACDH_STATUS_INVALID_CONFIG = 3,
  VACDH_STATUS_UNSORTED_TRACE = 4,
  VACDH_STATUS_OBJECT_TOO_LARGE = 5,
  VACDH_STATUS_CAPACITY_VIOLATION = 6,
  VACDH_STATUS_MALFORMED_INPUT = 7,
  VACDH_STATUS_IO = 8,
  VACDH_STATUS_OUT_OF_RANGE = 9,
  VACDH_STATUS_INTERNAL = 10,
} VacdhStatus;

// Opaque simulation report.
typedef struct VacdhReport VacdhReport;

// Opaque request trace.
typedef struct VacdhTrace VacdhTrace;

typedef struct VacdhPolicyConfig {
  enum VacdhPolicyKind kind;
  double omega;
  double gamma;
  uintptr_t window_size;
} VacdhPolicyConfig;

typedef struct VacdhCounts {
  uint64_t hits;
  uint64_t misses;
  uint64_t delayed_hits;
} VacdhCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread, or an empty string.
// The pointer stays valid until the next failing call on this thread.
const char *vacdh_last_error(void);

// Default parameters for `kind`.
struct VacdhPolicyConfig vacdh_policy_default(enum VacdhPolicyKind kind);

// New empty trace. Never returns null.
struct VacdhTrace *vacdh_trace_new(void);

// # Safety
// `trace` must be null or a handle from this library not yet freed.
void vacdh_trace_free(struct VacdhTrace *trace);

// Appends one request. Times must not decrease.
//
// # Safety
// `trace` must be a live trace handle.
enum VacdhStatus vacdh_trace_push(struct VacdhTrace *trace,
                                  double time_ms,
                                  uint64_t object_id,
                                  uint64_t size_bytes);

// Number of requests; 0 for a null handle.
//
// # Safety
// `trace` must be null or a live trace handle.
uintptr_t vacdh_trace_len(const struct VacdhTrace *trace);

// Loads a CSV trace with columns `time_ms,object_id,size_bytes`. String
// object keys are mapped to dense ids in order of first appearance.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum VacdhStatus vacdh_trace_load_csv(const char *path, struct VacdhTrace **out);

// Synthetic Zipf trace. `rate` is the aggregate request rate per ms;
// `pareto` selects heavy-tailed gaps with the same mean.
//
// # Safety
// `out` must be a writable pointer.
enum VacdhStatus vacdh_trace_generate(uintptr_t num_requests,
                                      uintptr_t num_objects,
                                      double zipf_exponent,
                                      uint64_t min_size,
                                      uint64_t max_size,
                                      double rate,
                                      bool pareto,
                                      uint64_t seed,
                                      struct VacdhTrace **out);

// Replays `trace` through a cache of `capacity` bytes. Fetch latency is
// `latency_base_ms + latency_coeff * size`.
//
// # Safety
// `trace` and `policy` must be valid pointers and `out` writable.
enum VacdhStatus vacdh_simulate(const struct VacdhTrace *trace,
                                uint64_t capacity,
                                const struct VacdhPolicyConfig *policy,
                                double latency_base_ms,
                                double latency_coeff,
                                struct VacdhReport **out);

// # Safety
// `report` must be null or a handle from this library not yet freed.
void vacdh_report_free(struct VacdhReport *report);

// Sum of per-request latencies in ms; NaN for a null handle.
//
// # Safety
// `report` must be null or a live report handle.
double vacdh_report_total_latency(const struct VacdhReport *report);

// # Safety
// `report` must be a live report handle and `out` writable.
enum VacdhStatus vacdh_report_counts(const struct VacdhReport *report, struct VacdhCounts *out);

// Latency and kind (`VACDH_KIND_*`) of request `index`.
//
// # Safety
// `report` must be a live report handle; `latency_ms` and `kind` writable.
enum VacdhStatus vacdh_report_request(const struct VacdhReport *report,
                                      uintptr_t index,
                                      double *latency_ms,
                                      int32_t *kind);

// Full report as JSON; free with [`vacdh_string_free`].
//
// # Safety
// `report` must be a live report handle and `out` writable.
enum VacdhStatus vacdh_report_to_json(const struct VacdhReport *report, char **out);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void vacdh_string_free(char *s);

// Mean and variance of the aggregate delay.
//
// # Safety
// `mean` and `variance` must be writable.
enum VacdhStatus vacdh_delay_moments(double lambda, double z, double *mean, double *variance);

// Density of the aggregate delay at `d`: the point mass at `z` is written
// to `atom_weight` and the continuous density to `continuous`.
//
// # Safety
// `atom_weight` and `continuous` must be writable.
enum VacdhStatus vacdh_delay_pdf(double lambda,
                                 double z,
                                 double d,
                                 double *atom_weight,
                                 double *continuous);

// `P(D <= d)`.
//
// # Safety
// `out` must be writable.
enum VacdhStatus vacdh_delay_cdf(double lambda, double z, double d, double *out);

// VA-CDH eviction score; lower values are evicted first.
//
// # Safety
// `out` must be writable.
enum VacdhStatus vacdh_rank(double lambda,
                            double z,
                            double residual_ms,
                            uint64_t size_bytes,
                            double omega,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VACDH_H */
