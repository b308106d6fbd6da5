#ifndef FINSLEROID_H
#define FINSLEROID_H

/* Generated by cbindgen from the finsleroid-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum FrStatus {
  FR_STATUS_OK = 0,
  // A required pointer was null or an argument was malformed.
  FR_STATUS_INVALID_ARGUMENT = 1,
  // The scenario file could not be read.
  FR_STATUS_IO = 2,
  // The scenario JSON did not parse or validate.
  FR_STATUS_PARSE = 3,
  // The inputs left the admissible domain (norm range, cone, signature).
  FR_STATUS_DOMAIN = 4,
  // A numerical guard failed (step underflow, inadmissible stencil).
  FR_STATUS_NUMERIC = 5,
} FrStatus;

// Opaque scenario handle: the parsed scenario plus its immutable field set.
typedef struct FrScenario FrScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load a scenario from a JSON file. On success writes the new handle to
// `out`; the caller releases it with `fr_scenario_free`.
//
// Safety: `path` must be a valid NUL-terminated string and `out` a valid
// pointer.
enum FrStatus fr_scenario_load(const char *path, struct FrScenario **out);

// Parse a scenario from a JSON string.
//
// Safety: `json` must be a valid NUL-terminated string and `out` a valid
// pointer.
enum FrStatus fr_scenario_from_json(const char *json, struct FrScenario **out);

// Release a handle returned by the load functions. Null is a no-op.
//
// Safety: `handle` must be null or a pointer returned by a load function,
// released at most once.
void fr_scenario_free(struct FrScenario *handle);

// Dimension N of the scenario, or 0 for a null handle.
//
// Safety: `handle` must be null or a live scenario handle.
size_t fr_scenario_dimension(const struct FrScenario *handle);

// 1 when the background has time-space signature, 0 when positive-definite,
// -1 for a null handle.
//
// Safety: `handle` must be null or a live scenario handle.
int32_t fr_scenario_is_indefinite(const struct FrScenario *handle);

// The norm at (x, y): K in the positive-definite case, F in the indefinite
// case. `x` and `y` carry N entries; `out` receives one value.
//
// Safety: buffers must match the documented lengths for the handle's
// dimension.
enum FrStatus fr_norm(const struct FrScenario *handle,
                      const double *x,
                      const double *y,
                      double *out);

// The metric tensor at (x, y), row-major N*N: the closed form in the
// positive-definite case, the certified numeric Hessian in the indefinite
// case.
//
// Safety: buffers must match the documented lengths for the handle's
// dimension.
enum FrStatus fr_metric_tensor(const struct FrScenario *handle,
                               const double *x,
                               const double *y,
                               double *out);

// Spray coefficients G^i at (x, y), N entries. Positive-definite only.
//
// Safety: buffers must match the documented lengths for the handle's
// dimension.
enum FrStatus fr_spray(const struct FrScenario *handle,
                       const double *x,
                       const double *y,
                       double *out);

// Cartan trace A_i at (x, y), N entries. Positive-definite only.
//
// Safety: buffers must match the documented lengths for the handle's
// dimension.
enum FrStatus fr_cartan_trace(const struct FrScenario *handle,
                              const double *x,
                              const double *y,
                              double *out);

// Run the scenario's check batteries. `seed` overrides the random seed when
// nonzero. Writes pass/fail counts; returns FR_OK even when checks fail —
// inspect `failed`.
//
// Safety: `passed` and `failed` must be valid pointers.
enum FrStatus fr_run_checks(const struct FrScenario *handle,
                            uint64_t seed,
                            size_t *passed,
                            size_t *failed);

// Integrate a geodesic and report the worst relative norm drift over the
// trajectory. Positive-definite only.
//
// Safety: `x0` and `y0` must carry N entries; `drift` must be a valid
// pointer.
enum FrStatus fr_geodesic_drift(const struct FrScenario *handle,
                                const double *x0,
                                const double *y0,
                                double t_end,
                                double step,
                                double *drift);

// The message of the last error on this thread, or null when the last call
// succeeded. The pointer stays valid until the next failing call on the
// same thread.
const char *fr_last_error_message(void);

// Library version as a static string.
const char *fr_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FINSLEROID_H */
