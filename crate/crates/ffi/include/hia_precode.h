#ifndef HIA_PRECODE_H
#define HIA_PRECODE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>
typedef struct HiaScenario HiaScenario;

/**
 * Failure classes mirrored across the ABI.
 */
typedef enum HiaStatus {
  HiaStatus_Ok = 0,
  /**
   * NULL pointer, non-UTF-8 text, or an argument violating a contract.
   */
  HiaStatus_InvalidArgument = 1,
  /**
   * Scenario text did not parse or failed validation.
   */
  HiaStatus_ParseError = 2,
  /**
   * A solver or channel computation failed.
   */
  HiaStatus_NumericalError = 3,
} HiaStatus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread, or NULL.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *hia_last_error(void);

/**
 * Parses a scenario from TOML text. NULL on failure.
 *
 * # Safety
 * `text` must be a NUL-terminated string or NULL.
 */
HiaScenario *hia_scenario_from_toml(const char *text);

/**
 * Returns a copy of the bundled scenario with the given id, or NULL.
 *
 * # Safety
 * `id` must be a NUL-terminated string or NULL.
 */
HiaScenario *hia_scenario_bundled(const char *id);

/**
 * Releases a scenario handle. NULL is a no-op.
 *
 * # Safety
 * `h` must come from a scenario constructor and not be freed twice.
 */
void hia_scenario_free(HiaScenario *h);

/**
 * Overrides the master seed.
 *
 * # Safety
 * `h` must be a live scenario handle.
 */
enum HiaStatus hia_scenario_set_seed(HiaScenario *h, uint64_t seed);

/**
 * Overrides the draw count (must stay positive).
 *
 * # Safety
 * `h` must be a live scenario handle.
 */
enum HiaStatus hia_scenario_set_draws(HiaScenario *h, uintptr_t draws);

/**
 * Runs the scenario's Monte Carlo experiment and returns the aggregated
 * rate table as CSV text. NULL on failure.
 *
 * # Safety
 * `h` must be a live scenario handle.
 */
char *hia_run_csv(const HiaScenario *h);

/**
 * Runs the scenario's solver once and returns the per-iteration trace as
 * CSV text. NULL on failure.
 *
 * # Safety
 * `h` must be a live scenario handle.
 */
char *hia_trace_csv(const HiaScenario *h);

/**
 * Runs the numeric self checks. Returns 0 when every check passes, 1 when
 * any check fails, or a negative HiaStatus value on setup errors. When
 * `report_out` is non-NULL it receives the check table (caller frees).
 *
 * # Safety
 * `only` must be NULL or a NUL-terminated suite name; `report_out` must be
 * NULL or a valid out-pointer.
 */
int32_t hia_validate(const char *only, char **report_out);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void hia_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIA_PRECODE_H */
