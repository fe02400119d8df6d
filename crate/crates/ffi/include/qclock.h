#ifndef QCLOCK_H
#define QCLOCK_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QclockStatus {
  QCLOCK_STATUS_OK = 0,
  QCLOCK_STATUS_NULL_POINTER = 1,
  QCLOCK_STATUS_INVALID_ARGUMENT = 2,
  QCLOCK_STATUS_DEGENERATE = 3,
  QCLOCK_STATUS_FIT_FAILED = 4,
  QCLOCK_STATUS_SIMULATION = 5,
  QCLOCK_STATUS_PARSE = 6,
  QCLOCK_STATUS_PANIC = 7,
} QclockStatus;

/**
 * Opaque pair ensemble.
 */
typedef struct QclockEnsemble QclockEnsemble;

/**
 * Opaque protocol state after the start measurement.
 */
typedef struct QclockSyncRun QclockSyncRun;

typedef struct QclockChannel {
  double eta_a;
  double eta_b;
  double p_miss;
  double p_false;
  /**
   * Herald with the fluorescence check; otherwise every pair is kept.
   */
  bool heralded;
} QclockChannel;

typedef struct QclockFringeFit {
  double omega;
  double omega_error;
  double gamma;
  double gamma_error;
  double chi_square;
  uint32_t iterations;
} QclockFringeFit;

typedef struct QclockCompareInput {
  double nu0;
  double b_param;
  double gamma;
  double alice_detuning;
  double bob_detuning;
  /**
   * Pair attempts per ensemble, over an ideal link.
   */
  uint64_t atoms;
  uint64_t n_periods;
  uint64_t trials_per_point;
  uint64_t seed;
} QclockCompareInput;

typedef struct QclockCompareResult {
  double fractional_offset;
  double std_error;
  double omega_a;
  double omega_a_error;
  double omega_b;
  double omega_b_error;
  double t1;
  bool phase_ambiguous;
} QclockCompareResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next call into the library on this thread.
 */
const char *qclock_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, freed once.
 */
void qclock_string_free(char *s);

/**
 * Exact `(P0, P1)` of a single-atom Ramsey sequence.
 *
 * # Safety
 * `p0` and `p1` must be null or valid for writes.
 */
enum QclockStatus qclock_ramsey_probabilities(double nu0,
                                              double detuning,
                                              double b_param,
                                              double gamma,
                                              double duration,
                                              bool use_density,
                                              double *p0,
                                              double *p1);

/**
 * Cesium clock frequency in a static field `b_static` (tesla).
 *
 * # Safety
 * `hz` must be null or valid for writes.
 */
enum QclockStatus qclock_clock_frequency(double b_static, double *hz);

/**
 * Generates `count` pair attempts from stream `(seed, stream)`.
 *
 * # Safety
 * `channel` must be null or valid for reads; `ensemble` null or valid for
 * writes.
 */
enum QclockStatus qclock_ensemble_generate(uint64_t count,
                                           const struct QclockChannel *channel,
                                           uint64_t seed,
                                           uint64_t stream,
                                           struct QclockEnsemble **ensemble);

/**
 * Parses an ensemble from its text form.
 *
 * # Safety
 * `text` must be null or a NUL-terminated string; `ensemble` null or valid
 * for writes.
 */
enum QclockStatus qclock_ensemble_from_text(const char *text, struct QclockEnsemble **ensemble);

/**
 * Text form of an ensemble; free the result with [`qclock_string_free`].
 *
 * # Safety
 * `ensemble` must be null or a live handle; `text` null or valid for writes.
 */
enum QclockStatus qclock_ensemble_to_text(const struct QclockEnsemble *ensemble, char **text);

/**
 * Number of records and number of kept records.
 *
 * # Safety
 * `ensemble` must be null or a live handle; outputs null or valid for writes.
 */
enum QclockStatus qclock_ensemble_counts(const struct QclockEnsemble *ensemble,
                                         uint64_t *len,
                                         uint64_t *kept);

/**
 * Releases an ensemble. Null is ignored.
 *
 * # Safety
 * `ensemble` must be null or a live handle, freed once.
 */
void qclock_ensemble_free(struct QclockEnsemble *ensemble);

/**
 * Alice's start measurement at `t0`. Takes ownership of `ensemble`, which
 * is released whether or not the call succeeds.
 *
 * # Safety
 * `ensemble` must be null or a live handle not used afterwards; `run` null
 * or valid for writes.
 */
enum QclockStatus qclock_sync_start(struct QclockEnsemble *ensemble,
                                    double t0,
                                    uint64_t seed,
                                    struct QclockSyncRun **run);

/**
 * Sizes of the type-I and type-II subensembles.
 *
 * # Safety
 * `run` must be null or a live handle; outputs null or valid for writes.
 */
enum QclockStatus qclock_sync_type_counts(const struct QclockSyncRun *run,
                                          uint64_t *type_i,
                                          uint64_t *type_ii);

/**
 * Releases a sync run. Null is ignored.
 *
 * # Safety
 * `run` must be null or a live handle, freed once.
 */
void qclock_sync_run_free(struct QclockSyncRun *run);

/**
 * Fits `(1 − e^(−γt)·cos Ωt)/2` to `len` fringe points. `clock_hint` is
 * the nominal Ω, or 0 for none.
 *
 * # Safety
 * The three arrays must hold `len` readable elements; `fit` null or valid
 * for writes.
 */
enum QclockStatus qclock_fit_fringe(const double *times,
                                    const double *successes,
                                    const uint64_t *trials,
                                    size_t len,
                                    double clock_hint,
                                    struct QclockFringeFit *fit);

/**
 * Two-ensemble frequency comparison of Bob's clock against Alice's.
 *
 * # Safety
 * `params` must be null or valid for reads; `result` null or valid for
 * writes.
 */
enum QclockStatus qclock_compare(const struct QclockCompareInput *params,
                                 struct QclockCompareResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCLOCK_H */
