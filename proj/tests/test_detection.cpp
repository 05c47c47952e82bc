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

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "doctest.h"
#include "fvbench/detection.hpp"
#include "fvbench/errors.hpp"

using namespace fvbench;
using namespace fvbench::detection;

namespace {

Box box(const std::string& service, double x, double y, double w, double h, const std::string& image = "img") {
    return Box{image, service, x, y, w, h};
}

std::set<std::string> services_of(const FaceGroup& g) {
    std::set<std::string> out;
    for (const auto& [s, b] : g.members) out.insert(s);
    return out;
}

}  // namespace

TEST_CASE("iou") {
    const auto a = box("s", 0, 0, 2, 2);
    const auto b = box("s", 1, 1, 2, 2);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, box("s", 10, 10, 2, 2)) == 0.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, box("s", 2, 0, 2, 2)) == 0.0);  // touching edges
}

TEST_CASE("near-identical boxes from five services form one group") {
    std::vector<Box> boxes;
    const char* services[] = {"a", "b", "c", "d", "e"};
    for (int i = 0; i < 5; ++i) boxes.push_back(box(services[i], 100 + i * 0.5, 100 - i * 0.3, 50, 50));
    const auto groups = group_detections(boxes);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].members.size() == 5);
}

TEST_CASE("two distant faces seen by all services form two groups") {
    std::vector<Box> boxes;
    for (const char* s : {"a", "b", "c"}) {
        boxes.push_back(box(s, 0, 0, 40, 40));
        boxes.push_back(box(s, 200, 0, 40, 40));
    }
    const auto groups = group_detections(boxes);
    REQUIRE(groups.size() == 2);
    for (const auto& g : groups) CHECK(services_of(g) == std::set<std::string>{"a", "b", "c"});
}

TEST_CASE("same-service boxes are never joined") {
    const std::vector<Box> boxes{box("a", 0, 0, 40, 40), box("a", 1, 0, 40, 40)};
    CHECK(iou(boxes[0], boxes[1]) > 0.9);
    const auto groups = group_detections(boxes);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].members.size() == 1);
}

TEST_CASE("chained components are split until one box per service") {
    // b bridges two boxes of a.
    const std::vector<Box> boxes{box("a", 0, 0, 40, 40), box("b", 10, 0, 40, 40), box("a", 20, 0, 40, 40)};
    const auto groups = group_detections(boxes);
    for (const auto& g : groups) CHECK(g.members.size() == services_of(g).size());
    std::size_t total = 0;
    for (const auto& g : groups) total += g.members.size();
    CHECK(total == 3);
}

TEST_CASE("grouping ignores input order") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 100);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Box> boxes;
        for (const char* s : {"a", "b", "c", "d"})
            for (int k = 0; k < 3; ++k) boxes.push_back(box(s, u(rng), u(rng), 30, 30));
        const auto ref = group_detections(boxes);
        std::shuffle(boxes.begin(), boxes.end(), rng);
        const auto again = group_detections(boxes);
        REQUIRE(ref.size() == again.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(ref[i].face_id == again[i].face_id);
            CHECK(services_of(ref[i]) == services_of(again[i]));
            for (const auto& [s, b] : ref[i].members) CHECK(again[i].members.at(s).x == b.x);
        }
        for (const auto& g : ref) CHECK(g.members.size() == services_of(g).size());
    }
}

TEST_CASE("eligibility requires exactly one face per detecting service") {
    const std::vector<std::string> detecting{"a", "b"};
    SUBCASE("one full group") {
        const std::vector<Box> boxes{box("a", 0, 0, 40, 40), box("b", 1, 1, 40, 40)};
        const auto groups = group_detections(boxes);
        CHECK(filter_eligible(groups, boxes, detecting).has_value());
    }
    SUBCASE("one service sees two faces") {
        const std::vector<Box> boxes{box("a", 0, 0, 40, 40), box("b", 1, 1, 40, 40), box("b", 200, 0, 40, 40)};
        const auto groups = group_detections(boxes);
        CHECK_FALSE(filter_eligible(groups, boxes, detecting).has_value());
    }
    SUBCASE("one service sees nothing") {
        const std::vector<Box> boxes{box("a", 0, 0, 40, 40)};
        const auto groups = group_detections(boxes);
        CHECK_FALSE(filter_eligible(groups, boxes, detecting).has_value());
    }
    SUBCASE("boxes that do not overlap") {
        const std::vector<Box> boxes{box("a", 0, 0, 40, 40), box("b", 100, 100, 40, 40)};
        const auto groups = group_detections(boxes);
        CHECK_FALSE(filter_eligible(groups, boxes, detecting).has_value());
    }
}

TEST_CASE("single-face discovery, hand trace") {
    const std::set<std::string> multi{"B"};
    auto compare = [&](const std::string& x, const std::string& y) {
        if (multi.contains(x) || multi.contains(y)) return CompareOutcome::invalid();
        return CompareOutcome::value(0.9);
    };
    const std::vector<std::pair<std::string, std::string>> pairs{{"A", "B"}, {"A", "C"}, {"B", "C"}};
    const auto r = discover_single_face_images(compare, pairs);
    CHECK(r.valid == std::set<std::string>{"A", "C"});
    CHECK(r.invalid == std::set<std::string>{"B"});
    REQUIRE(r.scores.size() == 1);
    CHECK(r.scores[0].first == "A");
    CHECK(r.scores[0].second == "C");
}

TEST_CASE("first invalid pair marks nobody") {
    auto compare = [](const std::string& x, const std::string& y) {
        return (x == "B" || y == "B") ? CompareOutcome::invalid() : CompareOutcome::value(0.5);
    };
    const std::vector<std::pair<std::string, std::string>> pairs{{"A", "B"}};
    const auto r = discover_single_face_images(compare, pairs);
    CHECK(r.valid.empty());
    CHECK(r.invalid.empty());
}

TEST_CASE("all single-face images") {
    auto compare = [](const std::string&, const std::string&) { return CompareOutcome::value(0.5); };
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    const auto pairs = ascending_pairs(ids);
    CHECK(pairs.size() == 6);
    const auto r = discover_single_face_images(compare, pairs);
    CHECK(r.valid.size() == 4);
    CHECK(r.scores.size() == 6);
}

TEST_CASE("known-invalid images are skipped") {
    const std::set<std::string> multi{"c", "f"};
    auto compare = [&](const std::string& x, const std::string& y) {
        if (multi.contains(x) || multi.contains(y)) return CompareOutcome::invalid();
        return CompareOutcome::value(0.5);
    };
    const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
    const auto r = discover_single_face_images(compare, ascending_pairs(ids));
    CHECK(r.invalid == multi);
    for (const auto& [x, y] : r.calls) {
        // a call touching c after c is known invalid would be wasted
        if (x == "c" || y == "c") CHECK((x < "c" || y < "c"));
    }
    for (const auto& s : r.scores) CHECK_FALSE((multi.contains(s.first) || multi.contains(s.second)));
}

TEST_CASE("transport failures are retried") {
    int failures = 2;
    auto compare = [&](const std::string&, const std::string&) {
        if (failures-- > 0) throw TransportError("flaky");
        return CompareOutcome::value(0.5);
    };
    const std::vector<std::pair<std::string, std::string>> pairs{{"a", "b"}};
    CHECK(discover_single_face_images(compare, pairs, 3).scores.size() == 1);
    failures = 5;
    CHECK_THROWS_AS(discover_single_face_images(compare, pairs, 1), TransportError);
}

TEST_CASE("detection and group dumps round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "fvb_detection_test";
    std::filesystem::create_directories(dir);
    const std::vector<Box> boxes{box("a", 0, 0, 40, 40, "i1"), box("b", 1.5, 1, 40, 40, "i1")};
    write_detections(dir / "d.csv", boxes);
    const auto back = read_detections(dir / "d.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].x == 1.5);
    const auto groups = group_detections(boxes);
    write_groups(dir / "g.csv", groups);
    const auto g = read_groups(dir / "g.csv");
    REQUIRE(g.size() == 1);
    CHECK(g[0].members.size() == 2);
    std::filesystem::remove_all(dir);
}
