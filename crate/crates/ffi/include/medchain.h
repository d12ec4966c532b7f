#ifndef MEDCHAIN_H
#define MEDCHAIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MedchainStatus {
  MEDCHAIN_STATUS_OK = 0,
  MEDCHAIN_STATUS_NULL_POINTER = 1,
  MEDCHAIN_STATUS_INVALID_UTF8 = 2,
  MEDCHAIN_STATUS_PARSE_ERROR = 3,
  MEDCHAIN_STATUS_VALIDATION_ERROR = 4,
  MEDCHAIN_STATUS_NOT_FOUND = 5,
  MEDCHAIN_STATUS_INVALID_ARGUMENT = 6,
  MEDCHAIN_STATUS_NO_FEASIBLE_CHAIN = 7,
  MEDCHAIN_STATUS_ILLEGAL_ACTION = 8,
  MEDCHAIN_STATUS_TERMINAL_STATE = 9,
  MEDCHAIN_STATUS_INTERNAL = 10,
} MedchainStatus;

/**
 * Loaded, validated scenario.
 */
typedef struct MedchainScenario MedchainScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static NUL-terminated string.
 */
const char *medchain_version(void);

/**
 * Message for the last failed call on this thread; empty after a success. Never null.
 */
const char *medchain_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void medchain_string_free(char *s);

/**
 * Loads a scenario by file path or bundled id.
 *
 * # Safety
 * `path_or_id` must be a NUL-terminated string; `out` must be writable.
 */
enum MedchainStatus medchain_scenario_load(const char *path_or_id, struct MedchainScenario **out);

/**
 * Parses a scenario from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum MedchainStatus medchain_scenario_parse(const char *json, struct MedchainScenario **out);

/**
 * Frees a scenario. Null is ignored.
 *
 * # Safety
 * `s` must come from `medchain_scenario_load`/`_parse` and not have been freed.
 */
void medchain_scenario_free(struct MedchainScenario *s);

/**
 * Serializes a scenario (meters, m/s) as JSON.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum MedchainStatus medchain_scenario_to_json(const struct MedchainScenario *s, char **out);

/**
 * Number of aircraft, watercraft, facilities and requests.
 *
 * # Safety
 * `s` must be a live handle; each out-pointer may be null.
 */
enum MedchainStatus medchain_scenario_counts(const struct MedchainScenario *s,
                                             size_t *aircraft,
                                             size_t *watercraft,
                                             size_t *facilities,
                                             size_t *requests);

/**
 * Great-circle distance in meters.
 *
 * # Safety
 * `out` must be writable.
 */
enum MedchainStatus medchain_gc_distance(double lat1,
                                         double lon1,
                                         double lat2,
                                         double lon2,
                                         double *out);

/**
 * Radius of action (half the maximum range), meters.
 *
 * # Safety
 * `out` must be writable.
 */
enum MedchainStatus medchain_radius_of_action(double max_range_m, double *out);

/**
 * Whether a leg is flyable with `fuel_m` of range left.
 *
 * # Safety
 * `out` must be writable.
 */
enum MedchainStatus medchain_leg_feasible(double fuel_m,
                                          double from_lat,
                                          double from_lon,
                                          double to_lat,
                                          double to_lon,
                                          bool refuel_at_to,
                                          bool *out);

/**
 * Runs one episode; writes the event log as JSON Lines.
 *
 * # Safety
 * `s` must be a live handle, `policy` a NUL-terminated string, `out_jsonl` writable.
 */
enum MedchainStatus medchain_simulate(const struct MedchainScenario *s,
                                      const char *policy,
                                      uint32_t iterations,
                                      uint64_t seed,
                                      char **out_jsonl);

/**
 * Fastest transfer chain between two points; writes the plan as JSON. Returns
 * `NO_FEASIBLE_CHAIN` when none exists within `horizon_s`.
 *
 * # Safety
 * `s` must be a live handle; `out_json` writable.
 */
enum MedchainStatus medchain_chain_search(const struct MedchainScenario *s,
                                          double from_lat,
                                          double from_lon,
                                          double to_lat,
                                          double to_lon,
                                          double t0_s,
                                          double horizon_s,
                                          double dt_s,
                                          char **out_json);

/**
 * Dispatch recommendation for the scenario's world at `at_s`; writes it as JSON.
 *
 * # Safety
 * `s` must be a live handle; `out_json` writable.
 */
enum MedchainStatus medchain_plan(const struct MedchainScenario *s,
                                  double at_s,
                                  uint32_t iterations,
                                  uint64_t seed,
                                  char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDCHAIN_H */
