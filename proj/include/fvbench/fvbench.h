/* Copyright 2026 The fvbench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of libfvbench.
 *
 * Every function returns an fvb_status. On failure, fvb_last_error() gives a
 * message for the calling thread. Strings returned through char** out
 * parameters are owned by the caller and released with fvb_string_free().
 */

#ifndef FVBENCH_FVBENCH_H
#define FVBENCH_FVBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FVB_API __declspec(dllexport)
#else
#define FVB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fvb_status {
    FVB_OK = 0,
    FVB_ERR_ARGUMENT = 1,   /* null pointer or malformed argument */
    FVB_ERR_VALIDATION = 2, /* bad configuration or input file */
    FVB_ERR_STAGE = 3,      /* a pipeline stage failed */
    FVB_ERR_IO = 4,
    FVB_ERR_COMPUTATION = 5,
    FVB_ERR_INTERNAL = 6
} fvb_status;

typedef struct fvb_run fvb_run;

FVB_API const char* fvb_version(void);
FVB_API const char* fvb_last_error(void);
FVB_API void fvb_string_free(char* s);

/* Loads a run configuration (JSON file). */
FVB_API fvb_status fvb_run_open(const char* config_path, fvb_run** out);
FVB_API void fvb_run_close(fvb_run* run);

/* Overrides one configuration field. Keys: seed, out, workers, budget, tau,
 * eigen_threshold, min_prevalent, min_crawled, iou, dedup, confidence,
 * failure_ceiling, annotations, log_level. */
FVB_API fvb_status fvb_run_set_option(fvb_run* run, const char* key, const char* value);

/* Executes the named stages ("all" or a comma list). Returns FVB_ERR_STAGE
 * when a stage failed; the manifest records which. */
FVB_API fvb_status fvb_run_execute(fvb_run* run, const char* stages);

FVB_API fvb_status fvb_run_manifest_json(const fvb_run* run, char** out);
FVB_API fvb_status fvb_run_config_hash(const fvb_run* run, char** out);

FVB_API fvb_status fvb_annotate_export(fvb_run* run, size_t k, const char* out_path, size_t* written);
FVB_API fvb_status fvb_annotate_merge(fvb_run* run, const char* in_path, size_t* merged);

/* Drift report of one service between two finished run directories, as JSON. */
FVB_API fvb_status fvb_compare_runs(const char* run_a, const char* run_b, const char* service, char** out_json,
                                    int* model_change);

/* Writes a simulator setup into dir. world_json and models_json may be NULL
 * (defaults); models_json is a JSON array of service models. separation_sd
 * is used for the default models only. Returns the config path. */
FVB_API fvb_status fvb_simulate(const char* dir, const char* world_json, const char* models_json,
                                double separation_sd, uint64_t seed, char** config_path);

/* Numeric helpers. */
FVB_API fvb_status fvb_wilson_interval(double k, double n, double confidence, double* lo, double* hi);
FVB_API fvb_status fvb_iou(const double a[4], const double b[4], double* out);

/* Spectral identity of an n x n row-major confidence matrix. On acceptance
 * *accepted = 1 and z (length n) holds the indicator. */
FVB_API fvb_status fvb_spectral_identity(const double* matrix, size_t n, double eigen_threshold, int* accepted,
                                         double* z);

#ifdef __cplusplus
}
#endif

#endif /* FVBENCH_FVBENCH_H */
