/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#ifndef CEVAL_CEVAL_H
#define CEVAL_CEVAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(CEVAL_BUILDING_LIBRARY)
#define CEVAL_API __attribute__((visibility("default")))
#else
#define CEVAL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every call returns one; details go to ceval_last_error(). */
typedef enum ceval_status {
  CEVAL_OK = 0,
  CEVAL_E_INVALID_ARGUMENT = 1,
  CEVAL_E_NUMERIC = 2,
  CEVAL_E_IO = 3,
  CEVAL_E_CONFIG = 4,
  CEVAL_E_CHECK_FAILED = 5,
  CEVAL_E_INTERNAL = 6
} ceval_status;

typedef struct ceval_config ceval_config;
typedef struct ceval_results ceval_results;

CEVAL_API const char* ceval_version(void);
/* Message of the last failed call on this thread, "" if none. */
CEVAL_API const char* ceval_last_error(void);
CEVAL_API void ceval_string_free(char* s);

/* Configuration. preset is "synthetic", "rubric" or "coding". */
CEVAL_API int ceval_config_preset(const char* preset, ceval_config** out);
CEVAL_API int ceval_config_from_json(const char* json, ceval_config** out);
CEVAL_API int ceval_config_load(const char* path, ceval_config** out);
/* Pretty JSON of the resolved configuration; free with ceval_string_free. */
CEVAL_API int ceval_config_to_json(const ceval_config* cfg, char** out);
CEVAL_API int ceval_config_set_threads(ceval_config* cfg, int threads);
CEVAL_API int ceval_config_set_master_seed(ceval_config* cfg, uint64_t master_seed);
CEVAL_API int ceval_config_set_seeds(ceval_config* cfg, int seeds);
CEVAL_API void ceval_config_free(ceval_config* cfg);

/* Full sweep. out_dir may be NULL to skip writing files. Progress lines go to stderr when verbose. */
CEVAL_API int ceval_run_sweep(const ceval_config* cfg, const char* out_dir, int verbose, ceval_results** out);
/* One cell for one seed. mode is a reward-mode key such as "scalar" or "coding_a0.5_w0.25". */
CEVAL_API int ceval_run_cell(const ceval_config* cfg, double beta, int n_obs, int n_exp, const char* mode,
                             uint64_t seed_index, ceval_results** out);
CEVAL_API size_t ceval_results_count(const ceval_results* r);
CEVAL_API size_t ceval_results_failures(const ceval_results* r);
/* Per-cell CSV rows (with header) of every report; free with ceval_string_free. */
CEVAL_API int ceval_results_csv(const ceval_results* r, char** out);
/* Aggregate table (average rank, top-3 count, excess percentage, macro regret). */
CEVAL_API int ceval_results_aggregate_csv(const ceval_results* r, char** out);
CEVAL_API int ceval_results_failures_text(const ceval_results* r, char** out);
CEVAL_API void ceval_results_free(ceval_results* r);

/* Re-aggregate the cell files of a finished run and write the summary tables to out_dir. */
CEVAL_API int ceval_report(const char* run_dir, const char* out_dir, char** aggregate_csv);

/* OBS and EXP rows of one cell as CSV plus a JSON feature sidecar. */
CEVAL_API int ceval_generate(const ceval_config* cfg, double beta, int n_obs, int n_exp, const char* mode,
                             uint64_t seed_index, const char* out_dir);

/* Theory checks; one line per check in *report. *all_passed is 1 when every check passed. */
CEVAL_API int ceval_check(int instances, uint64_t seed, char** report, int* all_passed);

#ifdef __cplusplus
}
#endif

#endif /* CEVAL_CEVAL_H */
