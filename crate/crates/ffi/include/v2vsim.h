#ifndef V2VSIM_H
#define V2VSIM_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum V2vOutcome {
  V2V_OUTCOME_SECURE_RUN = 0,
  V2V_OUTCOME_ATTACK_FOUND = 1,
  V2V_OUTCOME_HANDSHAKE_ABORTED = 2,
  V2V_OUTCOME_ERROR = 3,
} V2vOutcome;

/**
 * Status codes. Scenario parse failures use 10..=14.
 */
typedef enum V2vStatus {
  V2V_STATUS_OK = 0,
  V2V_STATUS_NULL_ARGUMENT = 1,
  V2V_STATUS_INVALID_UTF8 = 2,
  V2V_STATUS_UNKNOWN_DEMO = 3,
  V2V_STATUS_SIMULATION = 4,
  V2V_STATUS_SEARCH_BUDGET = 5,
  V2V_STATUS_SEARCH_LIMIT = 6,
  V2V_STATUS_PANIC = 7,
  V2V_STATUS_SYNTAX_ERROR = 10,
  V2V_STATUS_UNKNOWN_ID = 11,
  V2V_STATUS_DUPLICATE_ID = 12,
  V2V_STATUS_OUT_OF_RANGE = 13,
  V2V_STATUS_MISSING_FIELD = 14,
} V2vStatus;

/**
 * The result of one run.
 */
typedef struct V2vReport V2vReport;

/**
 * A parsed scenario.
 */
typedef struct V2vScenario V2vScenario;

typedef struct V2vSearchResult {
  bool attack_found;
  uint64_t nodes;
  uint64_t runs;
} V2vSearchResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses scenario text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum V2vStatus v2v_scenario_parse(const char *text, struct V2vScenario **out);

/**
 * Loads a built-in demo scenario by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum V2vStatus v2v_demo_scenario(const char *name, struct V2vScenario **out);

/**
 * Overrides the scenario seed.
 *
 * # Safety
 * `sc` must be a live scenario handle.
 */
enum V2vStatus v2v_scenario_set_seed(struct V2vScenario *sc, uint64_t seed);

/**
 * # Safety
 * `sc` must be null or a handle not yet freed.
 */
void v2v_scenario_free(struct V2vScenario *sc);

/**
 * Runs a scenario to completion.
 *
 * # Safety
 * `sc` must be a live scenario handle and `out` a valid pointer.
 */
enum V2vStatus v2v_run(const struct V2vScenario *sc, struct V2vReport **out);

/**
 * Bounded attack search with at most `max_actions` adversary actions.
 *
 * # Safety
 * `sc` must be a live scenario handle and `out` a valid pointer.
 */
enum V2vStatus v2v_search(const struct V2vScenario *sc,
                          uint32_t max_actions,
                          uint64_t node_budget,
                          struct V2vSearchResult *out);

/**
 * # Safety
 * `r` must be a live report handle.
 */
enum V2vOutcome v2v_report_outcome(const struct V2vReport *r);

/**
 * Process exit code matching the command-line tool.
 *
 * # Safety
 * `r` must be a live report handle.
 */
int32_t v2v_report_exit_code(const struct V2vReport *r);

/**
 * Writes the verdict, e.g. `ATTACK_FOUND(SECRECY)`, into `buf`.
 * Returns the full length; retry with a larger buffer if it is `>= len`.
 *
 * # Safety
 * `r` must be a live report handle; `buf` must hold `len` bytes or be null.
 */
size_t v2v_report_verdict(const struct V2vReport *r, char *buf, size_t len);

/**
 * Writes the rendered trace into `buf`. Same length convention as
 * [`v2v_report_verdict`].
 *
 * # Safety
 * `r` must be a live report handle; `buf` must hold `len` bytes or be null.
 */
size_t v2v_report_trace(const struct V2vReport *r, char *buf, size_t len);

/**
 * # Safety
 * `r` must be null or a handle not yet freed.
 */
void v2v_report_free(struct V2vReport *r);

/**
 * Copies the calling thread's last error message into `buf`.
 *
 * # Safety
 * `buf` must hold `len` bytes or be null.
 */
size_t v2v_last_error(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* V2VSIM_H */
