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

// Synthetic worlds and services with known ground truth.
//
// Every random quantity is drawn from a stream keyed by what it describes
// (seed, query, image, service, pair), never from a shared sequential
// generator, so results do not depend on call order or thread count.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fvbench/corpus.hpp"
#include "fvbench/detection.hpp"
#include "fvbench/evaluation.hpp"
#include "fvbench/scoring.hpp"
#include "fvbench/types.hpp"

namespace fvbench::simulator {

struct WorldConfig {
    std::size_t n_queries = 80;
    std::size_t faces_min = 20;
    std::size_t faces_max = 40;
    double contamination_min = 0.6;  // fraction of a query's faces showing its identity
    double contamination_max = 0.9;
    double second_identity_prob = 0.1;
    /// Demographic keys "gender|group|age_band", assigned to queries round-robin.
    std::vector<std::string> groups = {"female|asian|adult", "male|asian|adult", "female|white|adult",
                                       "male|white|adult"};
    std::uint64_t seed = 1;

    double multi_face_rate = 0.0;     // images holding a second face
    double duplicate_rate = 0.0;      // images re-published as a near copy
    double stale_rate = 0.0;          // images published before the fetch window
    double undated_rate = 0.0;        // images without a publication date
    double double_detection_rate = 0.0;
    double box_jitter = 2.0;          // sd in pixels
    std::size_t embedding_dim = 32;
    corpus::Date reference_date{std::chrono::year{2024}, std::chrono::month{1}, std::chrono::day{1}};
    int window_months = 12;

    void validate() const;  // throws ValidationError
};

struct Distribution {
    double mean = 0.0;
    double sd = 0.1;
};

struct ServiceModel {
    std::string service_id;
    Distribution genuine{0.8, 0.1};
    Distribution impostor{0.2, 0.1};
    std::map<std::string, double> genuine_offsets;   // group -> mean shift
    std::map<std::string, double> impostor_offsets;  // group -> mean shift
    scoring::ScoreRange range{0.0, 1.0};
    double fault_rate = 0.0;  // probability that one call attempt fails in transport
    bool detector = true;     // false: face count must be discovered by pairwise comparison

    void validate() const;
};

struct SimImage {
    std::string image_id;  // also the URL handed out by the provider
    std::string query_id;
    std::string identity;
    std::string group;
    bool multi_face = false;
    std::string second_identity;   // multi-face images only
    std::string duplicate_of;      // near copy of this image, or empty
    std::optional<corpus::Date> published_at;
    bool in_window = true;
    std::vector<double> embedding;
};

struct SimQuery {
    std::string query_id;
    corpus::NameEntry entry;
    std::string query_string;
    std::string identity;           // prevalent identity
    std::string second_identity;    // empty unless planted
    std::size_t first_image = 0;    // images [first_image, first_image + image_count)
    std::size_t image_count = 0;
};

struct World {
    WorldConfig config;
    std::vector<SimQuery> queries;
    std::vector<SimImage> images;

    const SimImage& image(const std::string& image_id) const;  // throws ValidationError
    const SimQuery& query(const std::string& query_id) const;
    std::vector<corpus::NameEntry> name_entries() const;

    /// y* for an image: 1 iff it shows its query's prevalent identity.
    Label y_star(const SimImage& img) const;

    /// Faces an ideal front end would keep: in window, single face, not a
    /// near copy. Face ids are "<image_id>#0", ordered by query then image.
    FaceTable faces() const;

    /// y* aligned with `faces`; faces are resolved through their image id.
    Labels true_labels(const FaceTable& faces) const;
    std::map<std::string, Label> annotations(const FaceTable& faces) const;

    /// Boxes the given detecting service reports for one image.
    std::vector<detection::Box> detections(const std::string& image_id, const std::string& service_id) const;

private:
    friend World generate_world(const WorldConfig& config);
    std::unordered_map<std::string, std::size_t> image_index_;
    std::unordered_map<std::string, std::size_t> query_index_;
};

/// Deterministic in config.seed. Throws ValidationError for infeasible configs.
World generate_world(const WorldConfig& config);

/// Raw score for two images, or nullopt ("invalid") when one holds several
/// faces. Same identity draws from the genuine distribution, else impostor,
/// truncated to the native range; group offsets apply when both images share
/// a group. Deterministic per (service, unordered pair, seed).
std::optional<double> simulate_score(const World& world, const std::string& image_a, const std::string& image_b,
                                     const ServiceModel& model, std::uint64_t seed);

/// Transport faults are drawn per (service, pair, attempt); attempts are
/// counted per pair, so a retry of a failed call gets a fresh draw.
class SimulatedBackend final : public scoring::ServiceBackend {
public:
    SimulatedBackend(std::shared_ptr<const World> world, ServiceModel model, std::uint64_t seed);

    const std::string& id() const override { return model_.service_id; }
    scoring::ScoreRange range() const override { return model_.range; }
    detection::CompareOutcome compare(const FaceRecord& a, const FaceRecord& b) override;

    /// Image-level comparator for single-face discovery.
    detection::ImageComparator comparator();

    const ServiceModel& model() const noexcept { return model_; }
    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t faults() const noexcept { return faults_.load(); }

private:
    detection::CompareOutcome compare_images(const std::string& a, const std::string& b);

    std::shared_ptr<const World> world_;
    ServiceModel model_;
    std::uint64_t seed_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> faults_{0};
    std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, std::uint32_t> attempts_;
};

/// Provider handing out each query's images with their publication dates.
class SimulatedProvider final : public corpus::ImageProvider {
public:
    explicit SimulatedProvider(std::shared_ptr<const World> world);

    std::vector<corpus::ProviderRef> fetch(const std::string& query_string, std::size_t max_results,
                                           const corpus::FetchWindow& window) override;

private:
    std::shared_ptr<const World> world_;
    std::map<std::string, std::size_t> by_query_string_;
};

/// Scores every pair of `table` with y* labels: the reference curve.
evaluation::EvalCurve true_curve(const World& world, const FaceTable& faces, const scoring::ScoreTable& table);

/// Reference curve over the ideal face set and a fresh pair plan.
evaluation::EvalCurve true_curve(const World& world, const ServiceModel& model, std::uint64_t seed);

/// Fault-free score table for `faces` under `plan`, straight from the model.
scoring::ScoreTable simulate_table(const World& world, const FaceTable& faces, const scoring::PairPlan& plan,
                                   const ServiceModel& model, std::uint64_t seed);

// --- configuration and dumps ---

/// Parses a "world" JSON block; missing keys keep their defaults.
WorldConfig world_config_from_json(const std::string& json_text);
ServiceModel service_model_from_json(const std::string& json_text);
std::string world_config_to_json(const WorldConfig& config);
std::string service_model_to_json(const ServiceModel& model);

/// Five services with the given separation in standard deviations.
std::vector<ServiceModel> default_services(double separation_sd = 6.0, std::size_t count = 5);

/// `face_id,query_id,true_identity,demographic,y_star`, one row per image.
void write_world_dump(const std::filesystem::path& path, const World& world);

}  // namespace fvbench::simulator
