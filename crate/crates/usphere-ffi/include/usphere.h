#ifndef USPHERE_H
#define USPHERE_H

/* Generated by cbindgen from usphere-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible entry point.
 */
typedef enum UsphereStatus {
  /**
   * The call succeeded.
   */
  USPHERE_STATUS_OK = 0,
  /**
   * The call ran to completion but a configured quality gate failed.
   */
  USPHERE_STATUS_GATE_FAILURE = 1,
  /**
   * Configuration or argument problem the caller can fix.
   */
  USPHERE_STATUS_CONFIG_ERROR = 2,
  /**
   * File or data-format problem.
   */
  USPHERE_STATUS_IO_ERROR = 3,
  /**
   * A required pointer argument was null.
   */
  USPHERE_STATUS_NULL_ARGUMENT = 4,
  /**
   * Stages called out of order (for example `simulate` before `encode`).
   */
  USPHERE_STATUS_STATE_ERROR = 5,
  /**
   * An internal invariant failed; the handle is still safe to free.
   */
  USPHERE_STATUS_PANIC = 6,
} UsphereStatus;

/**
 * One experiment in flight: the config plus every artifact produced so far.
 */
typedef struct UsphereRun UsphereRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *usphere_version(void);

/**
 * Message for the last failure on this thread; empty string if none yet.
 * Valid until the next failing call on the same thread.
 */
const char *usphere_last_error(void);

/**
 * Load a TOML config file and hand back a fresh run handle.
 *
 * # Safety
 * `config_path` must be a nul-terminated string; `out` must point to
 * writable storage for one pointer.
 */
enum UsphereStatus usphere_run_open(const char *config_path, struct UsphereRun **out);

/**
 * Parse a TOML config from memory and hand back a fresh run handle.
 *
 * # Safety
 * `config_toml` must be a nul-terminated string; `out` must point to
 * writable storage for one pointer.
 */
enum UsphereStatus usphere_run_open_str(const char *config_toml, struct UsphereRun **out);

/**
 * Override the config's RNG seed. Only legal before `encode`.
 *
 * # Safety
 * `run` must be a live handle from one of the open calls.
 */
enum UsphereStatus usphere_run_set_seed(struct UsphereRun *run, uint64_t seed);

/**
 * Synthesize the programs and modulate the composite.
 *
 * # Safety
 * `run` must be a live handle from one of the open calls.
 */
enum UsphereStatus usphere_run_encode(struct UsphereRun *run);

/**
 * Propagate the composite through the configured scene.
 *
 * # Safety
 * `run` must be a live handle from one of the open calls.
 */
enum UsphereStatus usphere_run_simulate(struct UsphereRun *run);

/**
 * Demodulate the simulated ears. Pass a negative channel to use the
 * config's pair; a non-negative value decodes that channel into both ears.
 *
 * # Safety
 * `run` must be a live handle from one of the open calls.
 */
enum UsphereStatus usphere_run_decode(struct UsphereRun *run, int32_t channel);

/**
 * Measure the run against the config's thresholds and build the report.
 * Returns `USPHERE_STATUS_GATE_FAILURE` when any configured gate fails;
 * the report is available either way.
 *
 * # Safety
 * `run` must be a live handle from one of the open calls.
 */
enum UsphereStatus usphere_run_analyze(struct UsphereRun *run);

/**
 * The analysis report as JSON lines. Owned by the handle; valid until the
 * next stage call on it or `usphere_run_free`.
 *
 * # Safety
 * `run` must be a live handle; `out_report` must point to writable storage
 * for one pointer.
 */
enum UsphereStatus usphere_run_report(struct UsphereRun *run, const char **out_report);

/**
 * Borrow the composite's samples (channel 0 is the only channel).
 *
 * # Safety
 * `run` must be a live handle; the three output pointers must be writable.
 * The borrowed samples die with the next stage call or `usphere_run_free`.
 */
enum UsphereStatus usphere_run_composite(struct UsphereRun *run,
                                         const double **out_samples,
                                         size_t *out_len,
                                         uint32_t *out_rate);

/**
 * Borrow one decoded ear's samples: channel 0 is left, 1 is right.
 *
 * # Safety
 * `run` must be a live handle; the three output pointers must be writable.
 * The borrowed samples die with the next stage call or `usphere_run_free`.
 */
enum UsphereStatus usphere_run_decoded(struct UsphereRun *run,
                                       uint32_t channel,
                                       const double **out_samples,
                                       size_t *out_len,
                                       uint32_t *out_rate);

/**
 * Release a run handle and everything it owns. Null is a no-op.
 *
 * # Safety
 * `run` must be null or a live handle; it is dead after this call.
 */
void usphere_run_free(struct UsphereRun *run);

/**
 * Run the built-in acceptance gates on generated fixtures. Writes the
 * report to `report_path` when non-null. Returns `USPHERE_STATUS_OK` when
 * every gate passes, `USPHERE_STATUS_GATE_FAILURE` otherwise.
 *
 * # Safety
 * `report_path`, when non-null, must be a nul-terminated string.
 */
enum UsphereStatus usphere_selftest(uint64_t seed, const char *report_path);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* USPHERE_H */
