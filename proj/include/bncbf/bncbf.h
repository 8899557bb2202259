/*
 * C interface to the bncbf safety-filter simulator.
 *
 * Objects are opaque handles created by *_load / *_parse / *_run functions and
 * released with the matching *_free. Every call returns a bncbf_status; on
 * failure bncbf_last_error() describes the problem (per thread, valid until the
 * next failing call on that thread). Strings returned through char** outputs
 * are owned by the caller and released with bncbf_string_free.
 */
#ifndef BNCBF_BNCBF_H
#define BNCBF_BNCBF_H

#include <stdint.h>

#if defined(_WIN32)
#  if defined(BNCBF_BUILDING)
#    define BNCBF_API __declspec(dllexport)
#  else
#    define BNCBF_API __declspec(dllimport)
#  endif
#else
#  define BNCBF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bncbf_status {
  BNCBF_OK = 0,
  BNCBF_ERR_INVALID_ARGUMENT = 1,
  BNCBF_ERR_PARSE = 2,      /* malformed scenario or tree */
  BNCBF_ERR_VALIDATION = 3, /* scenario failed its load-time checks */
  BNCBF_ERR_DOMAIN = 4,     /* pose outside the model domain */
  BNCBF_ERR_SOLVER = 5,
  BNCBF_ERR_IO = 6,
  BNCBF_ERR_INTERNAL = 7
} bncbf_status;

typedef struct bncbf_scenario bncbf_scenario;
typedef struct bncbf_run bncbf_run;

BNCBF_API const char* bncbf_version(void);
BNCBF_API const char* bncbf_status_name(bncbf_status status);
BNCBF_API const char* bncbf_last_error(void);
BNCBF_API void bncbf_string_free(char* s);

BNCBF_API bncbf_status bncbf_scenario_load(const char* path, bncbf_scenario** out);
BNCBF_API bncbf_status bncbf_scenario_parse(const char* json_text, bncbf_scenario** out);
BNCBF_API void bncbf_scenario_free(bncbf_scenario* scenario);

/* Overrides one scenario setting. Keys: dt, duration, eps1, eps2, alpha_slope,
 * seed, filter_bypass, broad_phase (booleans: nonzero is true). */
BNCBF_API bncbf_status bncbf_scenario_set(bncbf_scenario* scenario, const char* key, double value);

BNCBF_API bncbf_status bncbf_scenario_follower_count(const bncbf_scenario* scenario, int* out);

/* Copy keeping the leader, the obstacles and the first n followers. */
BNCBF_API bncbf_status bncbf_scenario_with_followers(const bncbf_scenario* scenario, int n, bncbf_scenario** out);

/* Load-time checks. *ok is 1 when the scenario may run; report_json (optional)
 * receives {"ok", "problems", "negative_leaves", "h_g", "leaves", ...}. */
BNCBF_API bncbf_status bncbf_validate(const bncbf_scenario* scenario, int* ok, char** report_json);

/* Runs the closed loop. threads <= 0 reads BNCBF_THREADS (default 1). */
BNCBF_API bncbf_status bncbf_run_scenario(const bncbf_scenario* scenario, int threads, bncbf_run** out);
BNCBF_API void bncbf_run_free(bncbf_run* run);

/* traj.csv, barriers.csv, events.json and summary.json. */
BNCBF_API bncbf_status bncbf_run_write(const bncbf_run* run, const char* dir);
BNCBF_API bncbf_status bncbf_run_read(const char* dir, bncbf_run** out);

BNCBF_API bncbf_status bncbf_run_summary(const bncbf_run* run, char** json);
BNCBF_API bncbf_status bncbf_run_counts(const bncbf_run* run, int* violations, int* faults, int* aborted);
BNCBF_API bncbf_status bncbf_run_min_hg(const bncbf_run* run, double* out);

#ifdef __cplusplus
}
#endif

#endif
