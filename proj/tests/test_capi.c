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

#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "fvbench/fvbench.h"

static int failures = 0;

#define EXPECT(cond)                                                     \
    do {                                                                 \
        if (!(cond)) {                                                   \
            fprintf(stderr, "%s:%d: %s\n", __FILE__, __LINE__, #cond); \
            ++failures;                                                  \
        }                                                                \
    } while (0)

static void numeric_helpers(void) {
    double lo = 0, hi = 0, v = 0;
    EXPECT(fvb_wilson_interval(50, 100, 0.95, &lo, &hi) == FVB_OK);
    EXPECT(fabs(lo - 0.40383153036599563) < 1e-9);
    EXPECT(fabs(hi - 0.59616846963400437) < 1e-9);
    EXPECT(fvb_wilson_interval(5, 3, 0.95, &lo, &hi) == FVB_ERR_VALIDATION);
    EXPECT(strlen(fvb_last_error()) > 0);
    EXPECT(fvb_wilson_interval(1, 3, 0.95, NULL, &hi) == FVB_ERR_ARGUMENT);

    const double a[4] = {0, 0, 10, 10};
    const double b[4] = {5, 0, 10, 10};
    EXPECT(fvb_iou(a, b, &v) == FVB_OK);
    EXPECT(fabs(v - 50.0 / 150.0) < 1e-12);

    /* two identities: faces 0-2 agree, 3 is unrelated */
    double m[16] = {1, .9, .9, .1, .9, 1, .9, .1, .9, .9, 1, .1, .1, .1, .1, 1};
    double z[4];
    int accepted = 0;
    EXPECT(fvb_spectral_identity(m, 4, 2.0, &accepted, z) == FVB_OK);
    EXPECT(accepted == 1);
    EXPECT(z[0] > 0.5 && z[1] > 0.5 && z[2] > 0.5 && z[3] < 0.5);
}

static void run_lifecycle(const char* dir) {
    char* config = NULL;
    const char* world = "{\"n_queries\": 12, \"seed\": 3}";
    EXPECT(fvb_simulate(dir, world, NULL, 6.0, 1, &config) == FVB_OK);
    EXPECT(fvb_simulate(dir, "{\"n_queries\": -2}", NULL, 6.0, 1, NULL) == FVB_ERR_VALIDATION);
    if (!config) return;

    fvb_run* run = NULL;
    EXPECT(fvb_run_open("/nonexistent/config.json", &run) == FVB_ERR_VALIDATION);
    EXPECT(run == NULL);
    EXPECT(fvb_run_open(config, &run) == FVB_OK);
    fvb_string_free(config);
    if (!run) return;

    EXPECT(fvb_run_set_option(run, "tau", "2.5") == FVB_ERR_VALIDATION);
    EXPECT(fvb_run_set_option(run, "workers", "-1") == FVB_ERR_VALIDATION);
    EXPECT(fvb_run_set_option(run, "colour", "red") == FVB_ERR_VALIDATION);
    EXPECT(fvb_run_set_option(run, "workers", "2") == FVB_OK);
    EXPECT(fvb_run_set_option(run, "log_level", "warn") == FVB_OK);
    EXPECT(fvb_run_execute(run, "bogus") == FVB_ERR_VALIDATION);

    char* hash = NULL;
    EXPECT(fvb_run_config_hash(run, &hash) == FVB_OK);
    EXPECT(hash && strlen(hash) == 64);
    fvb_string_free(hash);

    EXPECT(fvb_run_execute(run, "all") == FVB_OK);
    char* manifest = NULL;
    EXPECT(fvb_run_manifest_json(run, &manifest) == FVB_OK);
    EXPECT(manifest && strstr(manifest, "\"complete\"") != NULL);
    fvb_string_free(manifest);

    char path[1024];
    size_t n = 99;
    snprintf(path, sizeof path, "%s/queue.csv", dir);
    EXPECT(fvb_annotate_export(run, 5, path, &n) == FVB_OK);
    EXPECT(n == 5);

    char out[1024];
    snprintf(out, sizeof out, "%s/run", dir);
    char* drift = NULL;
    int flag = -1;
    EXPECT(fvb_compare_runs(out, out, "svc_a", &drift, &flag) == FVB_OK);
    EXPECT(flag == 0);
    EXPECT(drift && strstr(drift, "\"delta\"") != NULL);
    fvb_string_free(drift);
    EXPECT(fvb_compare_runs(out, out, "nope", &drift, &flag) == FVB_ERR_VALIDATION);

    fvb_run_close(run);
}

int main(int argc, char** argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s scratch-dir\n", argv[0]);
        return 2;
    }
    EXPECT(strlen(fvb_version()) > 0);
    numeric_helpers();
    run_lifecycle(argv[1]);
    if (failures) {
        fprintf(stderr, "%d failure(s)\n", failures);
        return 1;
    }
    printf("capi: all checks passed\n");
    return 0;
}
