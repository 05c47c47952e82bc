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

// Staged benchmark runs: source -> detect -> score -> estimate -> evaluate ->
// report. Each stage reads its inputs from the run directory and writes its
// artifacts there, so any suffix of the chain can be re-executed alone.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fvbench/corpus.hpp"
#include "fvbench/estimation.hpp"
#include "fvbench/scoring.hpp"
#include "fvbench/simulator.hpp"

namespace fvbench::pipeline {

struct ServiceConfig {
    std::string id;
    std::string backend;  // "simulator:<model>" or "replay" (cache only)
    std::optional<scoring::ScoreRange> range;
    double rate_limit = 0.0;
    scoring::RetryPolicy retry;
    std::optional<scoring::ModePair> modes;  // manual modes skip the mixture fit
    bool detector = true;
};

struct RunConfig {
    std::optional<std::filesystem::path> names;
    std::optional<std::filesystem::path> schema;
    std::optional<std::filesystem::path> provider_manifest;
    std::optional<std::filesystem::path> detections;
    std::optional<std::filesystem::path> annotations;  // ground-truth y for evaluation

    std::optional<simulator::WorldConfig> world;
    std::map<std::string, simulator::ServiceModel> models;

    std::vector<ServiceConfig> services;
    estimation::Thresholds thresholds;
    double iou_threshold = 0.2;
    double dedup_threshold = 0.9;
    corpus::FetchOptions fetch;
    std::uint64_t seed = 1;
    std::filesystem::path output = "run";
    double annotation_budget = 0.0;
    std::size_t workers = 1;
    double failure_ceiling = 0.05;
    double confidence = 0.95;

    /// Relative paths resolve against `base_dir`.
    static RunConfig from_json(std::string_view text, const std::filesystem::path& base_dir = ".");
    static RunConfig load(const std::filesystem::path& path);

    /// Canonical JSON of every result-relevant field (workers and output
    /// directory excluded).
    std::string canonical_json() const;
    std::string hash() const;  // SHA-256 of canonical_json()

    void validate() const;  // throws ValidationError
};

enum class Stage { Source, Detect, Score, Estimate, Evaluate, Report };

inline constexpr Stage kAllStages[] = {Stage::Source,   Stage::Detect,   Stage::Score,
                                       Stage::Estimate, Stage::Evaluate, Stage::Report};

const char* to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view name);
/// Comma separated stage names, or "all". Result is in pipeline order.
std::vector<Stage> parse_stages(std::string_view list);

enum class StageStatus { Pending, Complete, Failed, Skipped };
const char* to_string(StageStatus s) noexcept;

struct StageRecord {
    Stage stage = Stage::Source;
    std::string hash;  // chained over the upstream stage hashes
    StageStatus status = StageStatus::Pending;
    bool executed = false;  // false when the cached result was reused
    std::vector<std::string> artifacts;
    std::string error;
    std::string started;
    std::string finished;
};

struct RunManifest {
    std::string config_hash;
    std::vector<StageRecord> stages;  // all six, in pipeline order

    bool ok() const;  // no failed stage
    const StageRecord& at(Stage s) const;
    StageRecord& at(Stage s);
    std::string to_json() const;
    static RunManifest from_json(std::string_view text);
};

/// Executes the requested stages in order. Stages whose recorded hash and
/// artifacts are current are reused; stale upstream stages needed by a
/// requested stage are re-executed first. A failing stage is recorded and
/// every later stage is skipped. Throws ValidationError for a bad config.
RunManifest run(const RunConfig& config, std::span<const Stage> stages);

/// Reads <output>/manifest.json; empty manifest when absent.
RunManifest load_manifest(const std::filesystem::path& output);

struct DriftReport {
    std::string service;
    double eer_a = 0.0;
    double eer_b = 0.0;
    double lo_a = 0.0, hi_a = 0.0;
    double lo_b = 0.0, hi_b = 0.0;
    double delta = 0.0;  // eer_b - eer_a
    bool probable_model_change = false;  // Wilson intervals disjoint

    std::string to_json() const;
};

/// Compares the estimated EER of `service` in two finished runs.
DriftReport compare_runs(const std::filesystem::path& run_a, const std::filesystem::path& run_b,
                         const std::string& service);

/// Writes the first `k` entries of the annotation queue, skipping faces
/// already merged into <output>/annotations.csv. Requires a current estimate
/// stage. Returns the number of rows written.
std::size_t export_annotation_queue(const RunConfig& config, std::size_t k, const std::filesystem::path& out);

/// Merges a `face_id,y` file into <output>/annotations.csv (new rows win).
/// Returns the number of annotations in the merged file.
std::size_t merge_annotations(const RunConfig& config, const std::filesystem::path& in);

/// Writes a ready-to-run simulator setup into `dir`: config.json (world,
/// models, services), world.csv and truth.csv (y* per face).
std::filesystem::path write_simulation(const std::filesystem::path& dir, const simulator::WorldConfig& world,
                                       std::span<const simulator::ServiceModel> models, std::uint64_t seed);

std::string sha256_hex(std::string_view data);

}  // namespace fvbench::pipeline
