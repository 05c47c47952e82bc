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

#include "fvbench/detection.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <tuple>

#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/union_find.hpp"

namespace fvbench::detection {

namespace {

struct Edge {
    std::size_t a;  // ranks, a < b
    std::size_t b;
    double overlap;
    bool alive = true;
};

std::vector<std::size_t> component_labels(std::size_t n, const std::vector<Edge>& edges) {
    UnionFind uf(n);
    for (const auto& e : edges)
        if (e.alive) uf.unite(e.a, e.b);
    return uf.components();
}

const std::vector<std::string> kDetectionHeader = {"image_id", "service_id", "x", "y", "w", "h"};
const std::vector<std::string> kGroupHeader = {"face_id", "image_id", "service_id", "x", "y", "w", "h"};

Box box_from_fields(const std::vector<std::string>& f, std::size_t offset, std::size_t line) {
    Box b{f[offset], f[offset + 1], csv::parse_double(f[offset + 2], line), csv::parse_double(f[offset + 3], line),
          csv::parse_double(f[offset + 4], line), csv::parse_double(f[offset + 5], line)};
    if (!b.valid()) throw ParseError("box width and height must be positive", line);
    return b;
}

std::vector<std::string> box_fields(const Box& b) {
    return {b.image_id, b.service_id, csv::format_double(b.x), csv::format_double(b.y), csv::format_double(b.w),
            csv::format_double(b.h)};
}

}  // namespace

double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.w * a.h + b.w * b.h - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<FaceGroup> group_detections(std::span<const Box> boxes, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ValidationError("IoU threshold must be in (0,1)");
    const std::size_t n = boxes.size();
    if (n == 0) return {};
    for (const auto& b : boxes) {
        if (!b.valid()) throw ValidationError("box with non-positive size in image '" + b.image_id + "'");
        if (b.image_id != boxes[0].image_id) throw ValidationError("group_detections expects boxes of one image");
    }

    std::vector<std::size_t> ranked(n);
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t i, std::size_t j) {
        const auto& p = boxes[i];
        const auto& q = boxes[j];
        return std::tie(p.service_id, p.x, p.y, p.w, p.h) < std::tie(q.service_id, q.x, q.y, q.w, q.h);
    });
    auto box_at = [&](std::size_t rank) -> const Box& { return boxes[ranked[rank]]; };

    std::vector<Edge> candidates;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (box_at(a).service_id != box_at(b).service_id)
                candidates.push_back({a, b, iou(box_at(a), box_at(b))});
    // Weight 1 - IoU ascending, ties by rank pair.
    std::stable_sort(candidates.begin(), candidates.end(), [](const Edge& x, const Edge& y) {
        if (x.overlap != y.overlap) return x.overlap > y.overlap;
        return std::tie(x.a, x.b) < std::tie(y.a, y.b);
    });

    std::vector<Edge> forest;
    UnionFind kruskal(n);
    for (const auto& e : candidates)
        if (kruskal.unite(e.a, e.b)) forest.push_back(e);

    for (auto& e : forest) e.alive = e.overlap > iou_threshold;

    // Chained components can still contain two boxes of one service.
    for (;;) {
        const auto label = component_labels(n, forest);
        std::size_t conflicted = static_cast<std::size_t>(-1);
        std::map<std::pair<std::size_t, std::string>, int> seen;
        for (std::size_t r = 0; r < n && conflicted == static_cast<std::size_t>(-1); ++r)
            if (++seen[{label[r], box_at(r).service_id}] > 1) conflicted = label[r];
        if (conflicted == static_cast<std::size_t>(-1)) break;

        Edge* weakest = nullptr;
        for (auto& e : forest) {
            if (!e.alive || label[e.a] != conflicted) continue;
            // Forest order is Kruskal order, so on equal IoU the later edge is cut.
            if (!weakest || e.overlap <= weakest->overlap) weakest = &e;
        }
        weakest->alive = false;
    }

    const auto label = component_labels(n, forest);
    const std::size_t count = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<FaceGroup> groups(count);
    for (std::size_t k = 0; k < count; ++k) {
        groups[k].image_id = boxes[0].image_id;
        groups[k].face_id = boxes[0].image_id + "#" + std::to_string(k);
    }
    for (std::size_t r = 0; r < n; ++r) groups[label[r]].members.emplace(box_at(r).service_id, box_at(r));
    return groups;
}

std::optional<FaceGroup> filter_eligible(std::span<const FaceGroup> groups, std::span<const Box> boxes,
                                         std::span<const std::string> detecting_services) {
    for (const auto& service : detecting_services) {
        const auto found = std::count_if(boxes.begin(), boxes.end(),
                                         [&](const Box& b) { return b.service_id == service; });
        if (found != 1) return std::nullopt;
    }
    for (const auto& g : groups) {
        const bool complete = std::all_of(detecting_services.begin(), detecting_services.end(),
                                          [&](const std::string& s) { return g.members.contains(s); });
        if (complete) return g;
    }
    return std::nullopt;
}

DiscoveryResult discover_single_face_images(const ImageComparator& compare,
                                            std::span<const std::pair<std::string, std::string>> pairs,
                                            int max_retries) {
    DiscoveryResult out;
    for (const auto& [i1, i2] : pairs) {
        if (out.invalid.contains(i1) || out.invalid.contains(i2)) continue;

        CompareOutcome result;
        for (int attempt = 0;; ++attempt) {
            try {
                out.calls.emplace_back(i1, i2);
                result = compare(i1, i2);
                break;
            } catch (const TransportError&) {
                if (attempt >= max_retries) throw;
            }
        }

        if (result.is_invalid()) {
            if (out.valid.contains(i1)) out.invalid.insert(i2);
            if (out.valid.contains(i2)) out.invalid.insert(i1);
        } else {
            out.scores.push_back({i1, i2, *result.score});
            out.valid.insert(i1);
            out.valid.insert(i2);
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> ascending_pairs(std::span<const std::string> image_ids) {
    std::vector<std::string> ids(image_ids.begin(), image_ids.end());
    std::sort(ids.begin(), ids.end());
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(ids[i], ids[j]);
    return pairs;
}

void write_detections(const std::filesystem::path& path, std::span<const Box> boxes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row(kDetectionHeader);
    for (const auto& b : boxes) w.row(box_fields(b));
}

std::vector<Box> read_detections(const std::filesystem::path& path) {
    std::vector<Box> boxes;
    for (const auto& row : csv::read_file(path, kDetectionHeader)) boxes.push_back(box_from_fields(row.fields, 0, row.line));
    return boxes;
}

void write_groups(const std::filesystem::path& path, std::span<const FaceGroup> groups) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row(kGroupHeader);
    for (const auto& g : groups)
        for (const auto& [service, box] : g.members) {
            auto fields = box_fields(box);
            fields.insert(fields.begin(), g.face_id);
            w.row(fields);
        }
}

std::vector<FaceGroup> read_groups(const std::filesystem::path& path) {
    std::vector<FaceGroup> groups;
    for (const auto& row : csv::read_file(path, kGroupHeader)) {
        Box b = box_from_fields(row.fields, 1, row.line);
        if (groups.empty() || groups.back().face_id != row.fields[0])
            groups.push_back(FaceGroup{row.fields[0], b.image_id, {}});
        auto& g = groups.back();
        if (g.image_id != b.image_id) throw ParseError("face group spans two images", row.line);
        if (!g.members.emplace(b.service_id, b).second)
            throw ParseError("two boxes of one service in face group '" + g.face_id + "'", row.line);
    }
    return groups;
}

}  // namespace fvbench::detection
