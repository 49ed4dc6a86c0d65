#ifndef THERMOFRAY_H
#define THERMOFRAY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  TF_STATUS_NULL_POINTER = 1,
  TF_STATUS_INVALID_UTF8 = 2,
  TF_STATUS_INVALID_ARGUMENT = 3,
  TF_STATUS_CONFIG = 4,
  TF_STATUS_IO = 5,
  TF_STATUS_PARSE = 6,
  /**
   * Non-finite values, divergence or a controller fault.
   */
  TF_STATUS_SIMULATION = 7,
  TF_STATUS_PANIC = 8,
} TfStatus;

/**
 * A bias trajectory, one value per control interval.
 */
typedef struct TfAttack TfAttack;

/**
 * The log of a completed (or aborted) run.
 */
typedef struct TfRun TfRun;

/**
 * A parsed, validated scenario.
 */
typedef struct TfScenario TfScenario;

/**
 * Summary metrics of a run. Arrays are indexed center, west, east,
 * south, north.
 */
typedef struct TfReport {
  double mse[5];
  double energy_kwh[5];
  double total_energy_kwh;
  double lifespan_years;
  uint64_t valve_ops[5];
  uint64_t intervals;
  uint64_t fallback_intervals;
  double horizon_s;
  /**
   * 1 if the run was under attack.
   */
  uint8_t attacked;
} TfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a scenario from TOML text. Relative paths inside it resolve
 * against `base_dir`, or the working directory when `base_dir` is null.
 *
 * # Safety
 * `toml` and a non-null `base_dir` must be NUL-terminated strings; `out`
 * must be writable.
 */
enum TfStatus tf_scenario_from_toml(const char *toml,
                                    const char *base_dir,
                                    struct TfScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TfStatus tf_scenario_from_file(const char *path, struct TfScenario **out);

/**
 * # Safety
 * `scenario` must come from a `tf_scenario_*` constructor or be null.
 */
void tf_scenario_free(struct TfScenario *scenario);

/**
 * Runs the scenario, resolving its attack block if present. A run that
 * aborts mid-way still yields a handle with the partial log, together
 * with `TF_STATUS_SIMULATION`.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum TfStatus tf_run(const struct TfScenario *scenario, struct TfRun **out);

/**
 * # Safety
 * `run` must come from [`tf_run`] or be null.
 */
void tf_run_free(struct TfRun *run);

/**
 * Number of logged control intervals; 0 for a null handle.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
size_t tf_run_record_count(const struct TfRun *run);

/**
 * Metrics of `run`. With a non-null `baseline` (the unattacked run) the
 * lifespan reflects the energy ratio; otherwise it equals
 * `baseline_years`.
 *
 * # Safety
 * `run` must be a live handle, `baseline` a live handle or null, and
 * `out` writable.
 */
enum TfStatus tf_run_report(const struct TfRun *run,
                            const struct TfRun *baseline,
                            double baseline_years,
                            struct TfReport *out);

/**
 * Writes the run log as CSV.
 *
 * # Safety
 * `run` must be a live handle; `path` a NUL-terminated string.
 */
enum TfStatus tf_run_write_log_csv(const struct TfRun *run, const char *path);

/**
 * Synthesizes the energy-maximizing attack configured in the scenario.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum TfStatus tf_synthesize_attack(const struct TfScenario *scenario, struct TfAttack **out);

/**
 * Number of attack samples; 0 for a null handle.
 *
 * # Safety
 * `attack` must be a live handle or null.
 */
size_t tf_attack_len(const struct TfAttack *attack);

/**
 * Copies the attack samples (K) into `buf`, which must hold at least
 * [`tf_attack_len`] values.
 *
 * # Safety
 * `attack` must be a live handle and `buf` valid for `len` writes.
 */
enum TfStatus tf_attack_values(const struct TfAttack *attack, double *buf, size_t len);

/**
 * # Safety
 * `attack` must come from [`tf_synthesize_attack`] or be null.
 */
void tf_attack_free(struct TfAttack *attack);

/**
 * State derivative (K/s) of the scenario's building.
 *
 * `x` holds 14 states, `u` the 7 inputs (supply water, supply air, valves
 * center..north) and `d` the outdoor temperature, solar and internal
 * gains.
 *
 * # Safety
 * `scenario` must be a live handle; `x` and `xdot` valid for 14 values,
 * `u` for 7 and `d` for 3.
 */
enum TfStatus tf_dynamics(const struct TfScenario *scenario,
                          const double *x,
                          const double *u,
                          const double *d,
                          double *xdot);

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tf_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THERMOFRAY_H */
