#ifndef HMFLOW_H
#define HMFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Flow termination, as reported by [`hm_trace_status`].
 */
typedef enum HmFlowStatus {
  HM_FLOW_STATUS_TMAX_REACHED = 0,
  HM_FLOW_STATUS_TENSION_STOP = 1,
  HM_FLOW_STATUS_BLOWUP_DETECTED = 2,
} HmFlowStatus;

/**
 * Result codes of every fallible entry point.
 */
typedef enum HmStatus {
  HM_STATUS_OK = 0,
  HM_STATUS_NULL_POINTER = 1,
  HM_STATUS_INVALID_ARGUMENT = 2,
  HM_STATUS_VALIDATION = 3,
  HM_STATUS_NUMERICAL = 4,
  HM_STATUS_IO = 5,
  HM_STATUS_FORMAT = 6,
  HM_STATUS_BUFFER_TOO_SMALL = 7,
  HM_STATUS_PANIC = 8,
} HmStatus;

/**
 * A sampled two-chart map field.
 */
typedef struct HmField HmField;

/**
 * The result of a flow run.
 */
typedef struct HmTrace HmTrace;

typedef struct HmEnergy {
  double energy;
  double energy_d;
  double energy_dbar;
  double kappa;
  double degree_pullback;
} HmEnergy;

typedef struct HmFlowParams {
  double cfl;
  double t_max;
  double tension_stop;
  double snapshot_every;
  uint64_t record_every;
  double energy_blowup_guard;
  double epsilon0;
  double t_start;
} HmFlowParams;

typedef struct HmTraceRow {
  double t;
  double energy;
  double energy_d;
  double energy_dbar;
  double delta;
  double dist4pi;
  double max_density;
  double dt;
} HmTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. Valid until the next
 * failing call on the same thread.
 */
const char *hm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hm_version(void);

/**
 * Samples a map described by spec-file text (TOML) on an `n x n` grid per chart.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HmStatus hm_field_from_spec(const char *spec,
                                 uint32_t n,
                                 double half_width,
                                 uint32_t stencil,
                                 struct HmField **out);

/**
 * Samples `p/q` (or `p(conj z)/q(conj z)` when `antiholomorphic` is nonzero). Coefficients
 * are interleaved `re, im` pairs in ascending degree: `num` holds `2 * num_terms` doubles.
 *
 * # Safety
 * `num` and `den` must point to `2 * num_terms` and `2 * den_terms` doubles.
 */
enum HmStatus hm_field_from_rational(const double *num,
                                     size_t num_terms,
                                     const double *den,
                                     size_t den_terms,
                                     int32_t antiholomorphic,
                                     uint32_t n,
                                     double half_width,
                                     uint32_t stencil,
                                     struct HmField **out);

/**
 * Reads an SPHM snapshot.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HmStatus hm_field_load(const char *path, uint32_t stencil, struct HmField **out);

/**
 * Writes an SPHM snapshot.
 *
 * # Safety
 * `field` must come from this library; `path` must be a NUL-terminated string.
 */
enum HmStatus hm_field_save(const struct HmField *field, const char *path);

/**
 * # Safety
 * `field` must come from this library and not be used afterwards. Null is ignored.
 */
void hm_field_free(struct HmField *field);

/**
 * Nodes per chart side.
 *
 * # Safety
 * `field` must come from this library.
 */
uint32_t hm_field_n(const struct HmField *field);

/**
 * Copies one chart (0 North, 1 South) as `n * n * 3` doubles, row-major with `i` fastest.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum HmStatus hm_field_values(const struct HmField *field, uint32_t chart, double *buf, size_t len);

/**
 * Whole-sphere energies and the pullback degree.
 *
 * # Safety
 * `field` must come from this library and `out` be a valid pointer.
 */
enum HmStatus hm_field_energy(const struct HmField *field, struct HmEnergy *out);

/**
 * `||T||_{L^2}` of the field.
 *
 * # Safety
 * `field` must come from this library and `out` be a valid pointer.
 */
enum HmStatus hm_field_tension_l2(const struct HmField *field, double *out);

/**
 * Fills `out` with the library defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HmStatus hm_flow_params_default(struct HmFlowParams *out);

/**
 * Runs the flow from `field`. The input field is left untouched.
 *
 * # Safety
 * All pointers must be valid; `field` must come from this library.
 */
enum HmStatus hm_flow_run(const struct HmField *field,
                          const struct HmFlowParams *params,
                          struct HmTrace **out);

/**
 * # Safety
 * `trace` must come from this library and not be used afterwards. Null is ignored.
 */
void hm_trace_free(struct HmTrace *trace);

/**
 * Number of trace rows.
 *
 * # Safety
 * `trace` must come from this library.
 */
size_t hm_trace_len(const struct HmTrace *trace);

/**
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum HmStatus hm_trace_row(const struct HmTrace *trace, size_t index, struct HmTraceRow *out);

/**
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum HmStatus hm_trace_status(const struct HmTrace *trace, enum HmFlowStatus *out);

/**
 * Copy of the last field of the run as a new handle.
 *
 * # Safety
 * `trace` must come from this library and `out` be a valid pointer.
 */
enum HmStatus hm_trace_final_field(const struct HmTrace *trace, struct HmField **out);

/**
 * Trace as CSV text. Writes at most `len` bytes including the NUL and stores the full
 * length (without NUL) in `needed`; returns `BufferTooSmall` when it does not fit.
 *
 * # Safety
 * `buf` must hold `len` bytes (it may be null when `len` is 0); `needed` may be null.
 */
enum HmStatus hm_trace_csv(const struct HmTrace *trace, char *buf, size_t len, size_t *needed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMFLOW_H */
