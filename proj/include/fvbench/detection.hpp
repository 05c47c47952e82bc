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

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fvbench::detection {

struct Box {
    std::string image_id;
    std::string service_id;
    double x = 0, y = 0, w = 0, h = 0;

    bool valid() const noexcept { return w > 0 && h > 0; }
};

/// Intersection over union of two axis-aligned boxes, in [0, 1].
double iou(const Box& a, const Box& b);

/// One face as seen by several services. At most one box per service, all
/// from the same image.
struct FaceGroup {
    std::string face_id;
    std::string image_id;
    std::map<std::string, Box> members;  // service_id -> box
};

/// Unifies one image's boxes into FaceGroups.
///
/// Cross-service pairs only get an edge (weight 1 - IoU); a minimum spanning
/// forest is built with Kruskal and its edges with IoU <= threshold are cut.
/// A component that still holds two boxes of one service loses its weakest
/// edge until no such conflict remains. The result is independent of input
/// order: boxes are first ranked by (service_id, x, y, w, h), and that rank
/// breaks weight ties. Face ids are "<image_id>#<k>", k counted in group
/// order (groups sorted by their smallest ranked box).
std::vector<FaceGroup> group_detections(std::span<const Box> boxes, double iou_threshold = 0.2);

/// The single group of an image when every listed service found exactly one
/// face there and that group holds a box from each of them; nullopt when the
/// image has to be excluded.
std::optional<FaceGroup> filter_eligible(std::span<const FaceGroup> groups, std::span<const Box> boxes,
                                         std::span<const std::string> detecting_services);

// --- discovery of single-face images for services without a detector ---

/// Outcome of one comparator call: a confidence value, or the service's
/// "multiple faces" response.
struct CompareOutcome {
    std::optional<double> score;  // empty means invalid

    static CompareOutcome invalid() { return {}; }
    static CompareOutcome value(double s) { return {s}; }
    bool is_invalid() const noexcept { return !score.has_value(); }
};

/// Comparator for an image pair. May throw TransportError (retryable).
using ImageComparator = std::function<CompareOutcome(const std::string&, const std::string&)>;

struct StoredScore {
    std::string first;
    std::string second;
    double score = 0;
};

struct DiscoveryResult {
    std::set<std::string> valid;
    std::set<std::string> invalid;
    std::vector<StoredScore> scores;
    std::vector<std::pair<std::string, std::string>> calls;  // every comparator call, in order
};

/// Walks the pair stream once. Pairs touching a known-invalid image are
/// skipped. An "invalid" response marks the partner of an already-valid
/// image as invalid; a score is stored and marks both images valid.
/// TransportError is retried `max_retries` times, then rethrown.
DiscoveryResult discover_single_face_images(const ImageComparator& compare,
                                            std::span<const std::pair<std::string, std::string>> pairs,
                                            int max_retries = 3);

/// All unordered pairs (i < j) over `image_ids` in ascending order.
std::vector<std::pair<std::string, std::string>> ascending_pairs(std::span<const std::string> image_ids);

// --- dump formats ---

/// `image_id,service_id,x,y,w,h`
void write_detections(const std::filesystem::path& path, std::span<const Box> boxes);
std::vector<Box> read_detections(const std::filesystem::path& path);

/// `face_id,image_id,service_id,x,y,w,h`
void write_groups(const std::filesystem::path& path, std::span<const FaceGroup> groups);
std::vector<FaceGroup> read_groups(const std::filesystem::path& path);

}  // namespace fvbench::detection
