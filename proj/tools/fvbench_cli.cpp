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

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "fvbench/fvbench.h"

namespace {

int exit_code(fvb_status s) {
    switch (s) {
        case FVB_OK: return 0;
        case FVB_ERR_STAGE: return 3;
        case FVB_ERR_VALIDATION:
        case FVB_ERR_ARGUMENT: return 2;
        default: return 3;
    }
}

int report(fvb_status s) {
    if (s != FVB_OK) std::fprintf(stderr, "fvbench: %s\n", fvb_last_error());
    return exit_code(s);
}

struct RunFlags {
    std::string config = "config.json";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> workers;
    std::optional<double> budget;
    std::optional<double> tau;
    std::optional<double> eigen_threshold;
    std::optional<std::size_t> min_prevalent;
    std::optional<std::size_t> min_crawled;
    std::optional<double> iou;
    std::optional<double> dedup;
    std::optional<double> confidence;
    std::optional<double> failure_ceiling;
    std::optional<std::string> annotations;
    std::string log_level = "info";
};

void add_run_flags(CLI::App* app, RunFlags& f) {
    app->add_option("-c,--config", f.config, "run configuration (JSON)");
    app->add_option("--seed", f.seed, "pair-plan and simulator seed");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--workers", f.workers, "worker threads");
    app->add_option("--budget", f.budget, "annotation budget, fraction of the queue");
    app->add_option("--tau", f.tau, "label threshold on z");
    app->add_option("--eigen-threshold", f.eigen_threshold, "eigenvalue threshold T");
    app->add_option("--min-prevalent", f.min_prevalent, "minimum prevalent faces per query");
    app->add_option("--min-crawled", f.min_crawled, "minimum crawled faces per query");
    app->add_option("--iou", f.iou, "IoU threshold for box grouping");
    app->add_option("--dedup", f.dedup, "cosine threshold for near-duplicate removal");
    app->add_option("--confidence", f.confidence, "Wilson interval level");
    app->add_option("--failure-ceiling", f.failure_ceiling, "abort scoring above this failed-pair fraction");
    app->add_option("--annotations", f.annotations, "ground-truth annotations (face_id,y)");
    app->add_option("--log-level", f.log_level, "trace, debug, info, warn, error, off");
}

template <class T>
std::string text(const T& v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

fvb_status open_run(const RunFlags& f, fvb_run** run) {
    if (auto s = fvb_run_open(f.config.c_str(), run); s != FVB_OK) return s;
    std::map<std::string, std::string> opts;
    opts["log_level"] = f.log_level;
    if (f.seed) opts["seed"] = text(*f.seed);
    if (f.out) opts["out"] = *f.out;
    if (f.workers) opts["workers"] = text(*f.workers);
    if (f.budget) opts["budget"] = text(*f.budget);
    if (f.tau) opts["tau"] = text(*f.tau);
    if (f.eigen_threshold) opts["eigen_threshold"] = text(*f.eigen_threshold);
    if (f.min_prevalent) opts["min_prevalent"] = text(*f.min_prevalent);
    if (f.min_crawled) opts["min_crawled"] = text(*f.min_crawled);
    if (f.iou) opts["iou"] = text(*f.iou);
    if (f.dedup) opts["dedup"] = text(*f.dedup);
    if (f.confidence) opts["confidence"] = text(*f.confidence);
    if (f.failure_ceiling) opts["failure_ceiling"] = text(*f.failure_ceiling);
    if (f.annotations) opts["annotations"] = *f.annotations;
    for (const auto& [k, v] : opts)
        if (auto s = fvb_run_set_option(*run, k.c_str(), v.c_str()); s != FVB_OK) return s;
    return FVB_OK;
}

int execute(const RunFlags& f, const std::string& stages) {
    fvb_run* run = nullptr;
    fvb_status s = open_run(f, &run);
    if (s == FVB_OK) s = fvb_run_execute(run, stages.c_str());
    if (run) {
        char* manifest = nullptr;
        if (fvb_run_manifest_json(run, &manifest) == FVB_OK) {
            std::fputs(manifest, stdout);
            fvb_string_free(manifest);
        }
    }
    fvb_run_close(run);
    return report(s);
}

std::optional<std::string> slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Face verification benchmark without labeled data"};
    app.require_subcommand(1);

    RunFlags run_flags;
    std::string stages = "all";
    auto* run_cmd = app.add_subcommand("run", "execute pipeline stages");
    add_run_flags(run_cmd, run_flags);
    run_cmd->add_option("--stages", stages, "comma separated stages or 'all'");

    RunFlags est_flags, eval_flags, report_flags;
    auto* est_cmd = app.add_subcommand("estimate", "run through label estimation");
    add_run_flags(est_cmd, est_flags);
    auto* eval_cmd = app.add_subcommand("evaluate", "run through evaluation");
    add_run_flags(eval_cmd, eval_flags);
    auto* report_cmd = app.add_subcommand("report", "run through the report");
    add_run_flags(report_cmd, report_flags);

    std::string sim_dir;
    std::string world_file, models_file;
    double separation = 6.0;
    std::uint64_t sim_seed = 1;
    auto* sim_cmd = app.add_subcommand("simulate", "write a simulator world and run configuration");
    sim_cmd->add_option("dir", sim_dir, "target directory")->required();
    sim_cmd->add_option("--world", world_file, "world configuration (JSON)");
    sim_cmd->add_option("--models", models_file, "service models (JSON array)");
    sim_cmd->add_option("--separation", separation, "separation of default models, in sd");
    sim_cmd->add_option("--seed", sim_seed, "pair-plan seed written to the configuration");

    auto* ann_cmd = app.add_subcommand("annotate", "semi-supervised annotation round trip");
    ann_cmd->require_subcommand(1);
    RunFlags export_flags, merge_flags;
    std::size_t k = 0;
    std::string export_path, merge_path;
    auto* export_cmd = ann_cmd->add_subcommand("export", "write the first k entries of the annotation queue");
    add_run_flags(export_cmd, export_flags);
    export_cmd->add_option("-k,--count", k, "queue entries")->required();
    export_cmd->add_option("-o,--output", export_path, "queue CSV")->required();
    auto* merge_cmd = ann_cmd->add_subcommand("merge", "merge face_id,y annotations into the run");
    add_run_flags(merge_cmd, merge_flags);
    merge_cmd->add_option("input", merge_path, "annotation CSV")->required();

    std::string run_a, run_b, service;
    auto* cmp_cmd = app.add_subcommand("compare", "compare a service across two runs");
    cmp_cmd->add_option("run_a", run_a, "first run directory")->required();
    cmp_cmd->add_option("run_b", run_b, "second run directory")->required();
    cmp_cmd->add_option("--service", service, "service id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (run_cmd->parsed()) return execute(run_flags, stages);
    if (est_cmd->parsed()) return execute(est_flags, "source,detect,score,estimate");
    if (eval_cmd->parsed()) return execute(eval_flags, "source,detect,score,estimate,evaluate");
    if (report_cmd->parsed()) return execute(report_flags, "all");

    if (sim_cmd->parsed()) {
        std::optional<std::string> world, models;
        if (!world_file.empty() && !(world = slurp(world_file))) {
            std::fprintf(stderr, "fvbench: cannot read %s\n", world_file.c_str());
            return 2;
        }
        if (!models_file.empty() && !(models = slurp(models_file))) {
            std::fprintf(stderr, "fvbench: cannot read %s\n", models_file.c_str());
            return 2;
        }
        char* path = nullptr;
        const auto s = fvb_simulate(sim_dir.c_str(), world ? world->c_str() : nullptr,
                                    models ? models->c_str() : nullptr, separation, sim_seed, &path);
        if (s == FVB_OK) {
            std::printf("%s\n", path);
            fvb_string_free(path);
        }
        return report(s);
    }

    if (export_cmd->parsed() || merge_cmd->parsed()) {
        const auto& flags = export_cmd->parsed() ? export_flags : merge_flags;
        fvb_run* run = nullptr;
        fvb_status s = open_run(flags, &run);
        std::size_t n = 0;
        if (s == FVB_OK) {
            if (export_cmd->parsed()) {
                s = fvb_annotate_export(run, k, export_path.c_str(), &n);
                if (s == FVB_OK) std::printf("%zu queue entries written to %s\n", n, export_path.c_str());
            } else {
                s = fvb_annotate_merge(run, merge_path.c_str(), &n);
                if (s == FVB_OK) std::printf("%zu annotations in the run\n", n);
            }
        }
        fvb_run_close(run);
        return report(s);
    }

    if (cmp_cmd->parsed()) {
        char* json = nullptr;
        int flag = 0;
        const auto s = fvb_compare_runs(run_a.c_str(), run_b.c_str(), service.c_str(), &json, &flag);
        if (s == FVB_OK) {
            std::printf("%s\n", json);
            fvb_string_free(json);
        }
        return report(s);
    }
    return 2;
}
