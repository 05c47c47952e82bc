// Copyright 2026 The fvbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fvbench/fvbench.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fvbench/detection.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/estimation.hpp"
#include "fvbench/evaluation.hpp"
#include "fvbench/pipeline.hpp"
#include "fvbench/simulator.hpp"

struct fvb_run {
    fvbench::pipeline::RunConfig config;
    fvbench::pipeline::RunManifest manifest;
};

namespace {

thread_local std::string last_error;

fvb_status fail(fvb_status code, const std::string& message) {
    last_error = message;
    return code;
}

template <class F>
fvb_status guarded(F&& f) {
    try {
        last_error.clear();
        return f();
    } catch (const fvbench::ValidationError& e) {
        return fail(FVB_ERR_VALIDATION, e.what());
    } catch (const fvbench::ComputationError& e) {
        return fail(FVB_ERR_COMPUTATION, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(FVB_ERR_IO, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(FVB_ERR_VALIDATION, e.what());
    } catch (const std::exception& e) {
        return fail(FVB_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(FVB_ERR_INTERNAL, "unknown error");
    }
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

double to_double(const char* key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw fvbench::ValidationError(std::string(key) + ": not a number: " + v);
    return d;
}

std::uint64_t to_unsigned(const char* key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw fvbench::ValidationError(std::string(key) + ": not a non-negative integer: " + v);
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw fvbench::ValidationError(std::string(key) + ": out of range: " + v);
    }
}

void set_option(fvbench::pipeline::RunConfig& c, const std::string& key, const std::string& v) {
    auto& t = c.thresholds;
    if (key == "seed")
        c.seed = to_unsigned("seed", v);
    else if (key == "out")
        c.output = v;
    else if (key == "workers")
        c.workers = to_unsigned("workers", v);
    else if (key == "budget")
        c.annotation_budget = to_double("budget", v);
    else if (key == "tau")
        t.tau = to_double("tau", v);
    else if (key == "eigen_threshold")
        t.eigen_threshold = to_double("eigen_threshold", v);
    else if (key == "min_prevalent")
        t.min_prevalent = to_unsigned("min_prevalent", v);
    else if (key == "min_crawled")
        t.min_crawled = to_unsigned("min_crawled", v);
    else if (key == "iou")
        c.iou_threshold = to_double("iou", v);
    else if (key == "dedup")
        c.dedup_threshold = to_double("dedup", v);
    else if (key == "confidence")
        c.confidence = to_double("confidence", v);
    else if (key == "failure_ceiling")
        c.failure_ceiling = to_double("failure_ceiling", v);
    else if (key == "annotations")
        c.annotations = std::filesystem::path(v);
    else if (key == "log_level")
        spdlog::set_level(spdlog::level::from_str(v));
    else
        throw fvbench::ValidationError("unknown option '" + key + "'");
}

}  // namespace

extern "C" {

const char* fvb_version(void) { return "0.1.0"; }

const char* fvb_last_error(void) { return last_error.c_str(); }

void fvb_string_free(char* s) { std::free(s); }

fvb_status fvb_run_open(const char* config_path, fvb_run** out) {
    if (!config_path || !out) return fail(FVB_ERR_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto run = std::make_unique<fvb_run>();
        run->config = fvbench::pipeline::RunConfig::load(config_path);
        run->manifest = fvbench::pipeline::load_manifest(run->config.output);
        *out = run.release();
        return FVB_OK;
    });
}

void fvb_run_close(fvb_run* run) { delete run; }

fvb_status fvb_run_set_option(fvb_run* run, const char* key, const char* value) {
    if (!run || !key || !value) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        auto copy = run->config;
        set_option(copy, key, value);
        copy.validate();
        run->config = std::move(copy);
        return FVB_OK;
    });
}

fvb_status fvb_run_execute(fvb_run* run, const char* stages) {
    if (!run) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto list = fvbench::pipeline::parse_stages(stages ? stages : "all");
        run->manifest = fvbench::pipeline::run(run->config, list);
        if (!run->manifest.ok()) {
            for (const auto& r : run->manifest.stages)
                if (r.status == fvbench::pipeline::StageStatus::Failed)
                    return fail(FVB_ERR_STAGE, std::string(fvbench::pipeline::to_string(r.stage)) + ": " + r.error);
        }
        return FVB_OK;
    });
}

fvb_status fvb_run_manifest_json(const fvb_run* run, char** out) {
    if (!run || !out) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        *out = dup_string(run->manifest.to_json());
        return FVB_OK;
    });
}

fvb_status fvb_run_config_hash(const fvb_run* run, char** out) {
    if (!run || !out) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        *out = dup_string(run->config.hash());
        return FVB_OK;
    });
}

fvb_status fvb_annotate_export(fvb_run* run, size_t k, const char* out_path, size_t* written) {
    if (!run || !out_path) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto n = fvbench::pipeline::export_annotation_queue(run->config, k, out_path);
        if (written) *written = n;
        return FVB_OK;
    });
}

fvb_status fvb_annotate_merge(fvb_run* run, const char* in_path, size_t* merged) {
    if (!run || !in_path) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto n = fvbench::pipeline::merge_annotations(run->config, in_path);
        if (merged) *merged = n;
        return FVB_OK;
    });
}

fvb_status fvb_compare_runs(const char* run_a, const char* run_b, const char* service, char** out_json,
                            int* model_change) {
    if (!run_a || !run_b || !service || !out_json) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto d = fvbench::pipeline::compare_runs(run_a, run_b, service);
        *out_json = dup_string(d.to_json());
        if (model_change) *model_change = d.probable_model_change ? 1 : 0;
        return FVB_OK;
    });
}

fvb_status fvb_simulate(const char* dir, const char* world_json, const char* models_json, double separation_sd,
                        uint64_t seed, char** config_path) {
    if (!dir) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        fvbench::simulator::WorldConfig world;
        if (world_json) world = fvbench::simulator::world_config_from_json(world_json);
        world.validate();
        std::vector<fvbench::simulator::ServiceModel> models;
        if (models_json) {
            for (const auto& m : nlohmann::json::parse(models_json))
                models.push_back(fvbench::simulator::service_model_from_json(m.dump()));
        } else {
            models = fvbench::simulator::default_services(separation_sd);
        }
        const auto path = fvbench::pipeline::write_simulation(dir, world, models, seed);
        if (config_path) *config_path = dup_string(path.string());
        return FVB_OK;
    });
}

fvb_status fvb_wilson_interval(double k, double n, double confidence, double* lo, double* hi) {
    if (!lo || !hi) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const auto i = fvbench::evaluation::wilson_interval(k, n, confidence);
        *lo = i.lo;
        *hi = i.hi;
        return FVB_OK;
    });
}

fvb_status fvb_iou(const double a[4], const double b[4], double* out) {
    if (!a || !b || !out) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        const fvbench::detection::Box ba{"", "", a[0], a[1], a[2], a[3]};
        const fvbench::detection::Box bb{"", "", b[0], b[1], b[2], b[3]};
        *out = fvbench::detection::iou(ba, bb);
        return FVB_OK;
    });
}

fvb_status fvb_spectral_identity(const double* matrix, size_t n, double eigen_threshold, int* accepted, double* z) {
    if (!matrix || !accepted || (n > 0 && !z)) return fail(FVB_ERR_ARGUMENT, "null argument");
    return guarded([&] {
        std::vector<fvbench::FaceIndex> faces(n);
        for (std::size_t i = 0; i < n; ++i) faces[i] = i;
        const auto c = fvbench::scoring::ConfidenceMatrix::from_dense("q", "s", faces, {matrix, n * n});
        const auto r = fvbench::estimation::spectral_identity(c, eigen_threshold);
        *accepted = r.accepted() ? 1 : 0;
        if (r.accepted())
            for (std::size_t i = 0; i < n; ++i) z[i] = r.z[i];
        return FVB_OK;
    });
}

}  // extern "C"
