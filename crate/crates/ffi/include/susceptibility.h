#ifndef SUSCEPTIBILITY_H
#define SUSCEPTIBILITY_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SusStatus {
  SUS_STATUS_OK = 0,
  SUS_STATUS_NULL_POINTER = 1,
  // Invalid input: malformed config, inadmissible map, bad argument.
  SUS_STATUS_INVALID = 2,
  // A numeric target could not be certified.
  SUS_STATUS_NUMERIC = 3,
  SUS_STATUS_PANIC = 4,
  // Output buffer too small; the required size is reported through `len`.
  SUS_STATUS_BUFFER_TOO_SMALL = 5,
} SusStatus;

// A validated unimodal map.
typedef struct SusMap SusMap;

// A validated scenario parsed from TOML.
typedef struct SusScenario SusScenario;

// The inner series of a scenario's observable along its postcritical orbit.
typedef struct SusSigma SusSigma;

typedef struct SusComplex {
  double re;
  double im;
} SusComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Owned by the library.
const char *sus_last_error(void);

// Library version as a static NUL-terminated string.
const char *sus_version(void);

// Parse and validate a scenario. `overrides` may be null or a
// comma-separated list of `key=value` tolerance overrides.
//
// # Safety
// `toml` and `overrides` must be null or NUL-terminated; `out` must be writable.
enum SusStatus sus_scenario_from_toml(const char *toml,
                                      const char *overrides,
                                      struct SusScenario **out);

// Replace the scenario seed.
//
// # Safety
// `scenario` must come from `sus_scenario_from_toml`.
enum SusStatus sus_scenario_set_seed(struct SusScenario *scenario, uint64_t seed);

// Write the hex scenario hash, NUL-terminated, into `buf`. `len` holds the
// buffer size on entry and the required size (including NUL) on return.
//
// # Safety
// `buf` must hold `*len` bytes.
enum SusStatus sus_scenario_hash(const struct SusScenario *scenario, char *buf, uintptr_t *len);

// # Safety
// `scenario` must be null or come from `sus_scenario_from_toml`, and not be used afterwards.
void sus_scenario_free(struct SusScenario *scenario);

// Run a CLI command (`"acim"`, `"ww"`, ...) and write its artifacts into
// `out_dir`. On a numeric failure only `failure.json` is written.
//
// # Safety
// `command` and `out_dir` must be NUL-terminated.
enum SusStatus sus_run(const struct SusScenario *scenario,
                       const char *command,
                       const char *out_dir);

// Symmetric tent map on [0, 1] with slopes `±slope`.
//
// # Safety
// `out` must be writable.
enum SusStatus sus_map_tent(double slope, struct SusMap **out);

// Map described by a scenario.
//
// # Safety
// `scenario` must be valid; `out` must be writable.
enum SusStatus sus_map_from_scenario(const struct SusScenario *scenario, struct SusMap **out);

// # Safety
// `map` must be valid; `value` and `deriv` must be writable or null.
enum SusStatus sus_map_eval(const struct SusMap *map, double x, double *value, double *deriv);

// Critical point, critical value `c1`, and `c2 = f(c1)`.
//
// # Safety
// `map` must be valid; `out` must hold three doubles.
enum SusStatus sus_map_critical(const struct SusMap *map, double *out);

// # Safety
// `map` must be null or come from a `sus_map_*` constructor.
void sus_map_free(struct SusMap *map);

// Inner series of the scenario's observable along its postcritical orbit.
//
// # Safety
// `scenario` must be valid; `out` must be writable.
enum SusStatus sus_sigma_new(const struct SusScenario *scenario, struct SusSigma **out);

// Evaluate at `z` for `|z| < 1` to absolute tolerance `tol`. `tail` may be null.
//
// # Safety
// `sigma` must be valid; `out` must be writable.
enum SusStatus sus_sigma_eval(const struct SusSigma *sigma,
                              struct SusComplex z,
                              double tol,
                              struct SusComplex *out,
                              double *tail);

// # Safety
// `sigma` must be null or come from `sus_sigma_new`.
void sus_sigma_free(struct SusSigma *sigma);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUSCEPTIBILITY_H */
