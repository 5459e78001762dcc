/*
 *  Copyright 2026 The VSMO Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

/*
 * C interface of the visual-search model observer library.
 *
 * Every function returns a vsmo_status. On failure, vsmo_last_error() holds
 * a message for the calling thread until its next call into the library.
 * Handles are opaque; each *_free accepts NULL. Strings returned through
 * char** are owned by the caller and released with vsmo_string_free.
 */

#ifndef VSMO_VSMO_H
#define VSMO_VSMO_H

#include <stddef.h>
#include <stdint.h>

#if defined(VSMO_BUILDING_LIBRARY)
#define VSMO_API __attribute__((visibility("default")))
#else
#define VSMO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vsmo_status {
  VSMO_OK = 0,
  VSMO_ERR_INVALID_PARAMETER = 1,
  VSMO_ERR_INVALID_LOCATION = 2,
  VSMO_ERR_DEGENERATE_STATS = 3,
  VSMO_ERR_CONDITIONING = 4,
  VSMO_ERR_TRAINING = 5,
  VSMO_ERR_INVALID_INPUT = 6,
  VSMO_ERR_IO = 7,
  VSMO_ERR_PARSE = 8,
  VSMO_ERR_NOT_FOUND = 9,
  VSMO_ERR_CONFLICT = 10,
  VSMO_ERR_PRECONDITION = 11,
  VSMO_ERR_VALIDATION = 12,
  VSMO_ERR_SESSION_COMPLETE = 13,
  VSMO_ERR_NULL_ARGUMENT = 50,
  VSMO_ERR_INTERNAL = 99
} vsmo_status;

typedef struct vsmo_config vsmo_config;
typedef struct vsmo_dataset vsmo_dataset;
typedef struct vsmo_observer vsmo_observer;
typedef struct vsmo_results vsmo_results;
typedef struct vsmo_server vsmo_server;

/* Called with one line of progress text. */
typedef void (*vsmo_progress_fn)(const char* message, void* user);

VSMO_API const char* vsmo_version(void);
VSMO_API const char* vsmo_last_error(void);
VSMO_API const char* vsmo_status_name(vsmo_status status);
VSMO_API void vsmo_string_free(char* s);

/* Experiment configuration. */
VSMO_API vsmo_status vsmo_config_default(vsmo_config** out);
VSMO_API vsmo_status vsmo_config_load(const char* path, vsmo_config** out);
VSMO_API vsmo_status vsmo_config_parse(const char* text, vsmo_config** out);
VSMO_API vsmo_status vsmo_config_set_seed(vsmo_config* config, uint64_t seed);
VSMO_API vsmo_status vsmo_config_set_threads(vsmo_config* config, int threads);
VSMO_API vsmo_status vsmo_config_set_output_dir(vsmo_config* config, const char* dir);
/* Pinhole diameter relative to the lesion FWHM, used by simulate. */
VSMO_API vsmo_status vsmo_config_set_diameter(vsmo_config* config, double relative_diameter);
VSMO_API vsmo_status vsmo_config_get_output_dir(const vsmo_config* config, char** out);
VSMO_API vsmo_status vsmo_config_hash(const vsmo_config* config, char** out);
VSMO_API void vsmo_config_free(vsmo_config* config);

/* Datasets: n_pairs lesion-present then n_pairs lesion-absent cases. */
VSMO_API vsmo_status vsmo_simulate(const vsmo_config* config, int n_pairs, uint64_t seed, vsmo_dataset** out);
VSMO_API vsmo_status vsmo_dataset_load(const char* dir, vsmo_dataset** out);
VSMO_API vsmo_status vsmo_dataset_save(const vsmo_dataset* dataset, const char* dir);
VSMO_API size_t vsmo_dataset_size(const vsmo_dataset* dataset);
VSMO_API void vsmo_dataset_free(vsmo_dataset* dataset);

/* Refines the bank and chooses stage features on `design` (NULL: use
 * `training`), then trains `variant` ("pw", "npw-thr", ...) on `training`. */
VSMO_API vsmo_status vsmo_train(const vsmo_config* config, const char* variant, const vsmo_dataset* design,
                                const vsmo_dataset* training, vsmo_observer** out);
VSMO_API vsmo_status vsmo_observer_save(const vsmo_observer* observer, const char* path);
VSMO_API vsmo_status vsmo_observer_load(const char* path, vsmo_observer** out);
VSMO_API void vsmo_observer_free(vsmo_observer* observer);

/* Per-case ratings and localizations. */
VSMO_API vsmo_status vsmo_evaluate(const vsmo_observer* observer, const vsmo_dataset* dataset, int threads,
                                   vsmo_results** out);
VSMO_API vsmo_status vsmo_results_load(const char* path, vsmo_results** out);
VSMO_API vsmo_status vsmo_results_save(const vsmo_results* results, const char* path);
VSMO_API size_t vsmo_results_size(const vsmo_results* results);
VSMO_API vsmo_status vsmo_results_lroc_auc(const vsmo_results* results, double radius, double* out);
VSMO_API vsmo_status vsmo_results_roc_auc(const vsmo_results* results, double* out);
VSMO_API void vsmo_results_free(vsmo_results* results);

/* Summary CSV over one results file per trial. */
VSMO_API vsmo_status vsmo_score(const char* const* paths, size_t n_paths, double radius, const char* condition,
                                char** out_csv);

/* Experiments; CSV tables are written under the config's output_dir.
 * `failures` (may be NULL) receives the number of failed cells. */
VSMO_API vsmo_status vsmo_run_sweep(const vsmo_config* config, vsmo_progress_fn progress, void* user, int* failures);
VSMO_API vsmo_status vsmo_run_training_study(const vsmo_config* config, vsmo_progress_fn progress, void* user,
                                             int* failures);
VSMO_API vsmo_status vsmo_run_correlation_study(const vsmo_config* config, vsmo_progress_fn progress, void* user);

/* Reader-study service. `config_path` may be NULL; environment variables
 * override it, and non-NULL `root` / `host` and `port` >= 0 override both.
 * Port 0 picks a free port; the bound port is stored in `bound_port`. */
VSMO_API vsmo_status vsmo_server_open(const char* config_path, const char* root, const char* host, int port,
                                      vsmo_server** out, int* bound_port);
/* Blocks until vsmo_server_stop is called from another thread. */
VSMO_API vsmo_status vsmo_server_run(vsmo_server* server);
VSMO_API void vsmo_server_stop(vsmo_server* server);
VSMO_API void vsmo_server_free(vsmo_server* server);

#ifdef __cplusplus
}
#endif

#endif /* VSMO_VSMO_H */
