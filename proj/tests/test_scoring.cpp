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

#include <atomic>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fvbench/errors.hpp"
#include "fvbench/scoring.hpp"

using namespace fvbench;
using namespace fvbench::scoring;

namespace {

FaceTable make_faces(const std::vector<std::pair<std::string, std::string>>& queries, std::size_t per_query) {
    FaceTable faces;
    for (const auto& [q, group] : queries)
        for (std::size_t k = 0; k < per_query; ++k) {
            const auto id = q + "-i" + std::to_string(k);
            faces.push_back({id + "#0", q, group, id});
        }
    return faces;
}

class FakeBackend final : public ServiceBackend {
public:
    explicit FakeBackend(std::set<std::pair<std::string, std::string>> flaky = {}) : flaky_(std::move(flaky)) {}
    const std::string& id() const override { return id_; }
    ScoreRange range() const override { return {0, 100}; }
    detection::CompareOutcome compare(const FaceRecord& a, const FaceRecord& b) override {
        ++calls;
        {
            std::lock_guard lock(mutex_);
            if (flaky_.erase({a.face_id, b.face_id})) throw TransportError("flaky");
        }
        if (a.face_id.starts_with("bad") || b.face_id.starts_with("bad")) return detection::CompareOutcome::invalid();
        return detection::CompareOutcome::value(a.query_id == b.query_id ? 90.0 : 10.0);
    }
    std::atomic<int> calls{0};

private:
    std::string id_ = "fake";
    std::mutex mutex_;
    std::set<std::pair<std::string, std::string>> flaky_;
};

std::vector<double> two_gaussians(std::size_t n, double m0, double m1, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> a(m0, sd), b(m1, sd);
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(i % 2 ? a(rng) : b(rng));
    return out;
}

}  // namespace

TEST_CASE("pair plan counts") {
    SUBCASE("one query of ten faces") {
        const auto plan = build_pair_plan(make_faces({{"q1", "g"}}, 10), 1);
        CHECK(plan.same_query.size() == 45);
        CHECK(plan.cross_query.empty());
        CHECK(plan.warnings.size() == 1);
    }
    SUBCASE("two queries of ten in one group") {
        const auto faces = make_faces({{"q1", "g"}, {"q2", "g"}}, 10);
        const auto plan = build_pair_plan(faces, 1);
        CHECK(plan.same_query.size() == 90);
        CHECK(plan.cross_query.size() == 90);
        for (const auto& p : plan.cross_query) CHECK(faces[p.first].query_id != faces[p.second].query_id);
    }
}

TEST_CASE("pair plan properties") {
    const auto faces = make_faces({{"q1", "a"}, {"q2", "a"}, {"q3", "b"}, {"q4", "b"}, {"q5", "b"}}, 7);
    const auto plan = build_pair_plan(faces, 42);
    const auto again = build_pair_plan(faces, 42);
    CHECK(plan.same_query == again.same_query);
    CHECK(plan.cross_query == again.cross_query);
    CHECK(build_pair_plan(faces, 43).cross_query != plan.cross_query);

    std::set<FacePair> seen;
    for (const auto& p : plan.all()) {
        CHECK(p.pair.first < p.pair.second);
        CHECK(seen.insert(p.pair).second);
        if (p.kind == PairKind::CrossQuery) CHECK(faces[p.pair.first].group == faces[p.pair.second].group);
    }
    CHECK(plan.cross_query.size() == plan.same_query.size());
}

TEST_CASE("collect scores with caching and retries") {
    const auto faces = make_faces({{"q1", "g"}, {"q2", "g"}}, 10);
    const auto plan = build_pair_plan(faces, 1);
    REQUIRE(plan.size() == 180);

    SUBCASE("empty plan") {
        FakeBackend backend;
        ScoreStore store;
        CHECK(collect_scores(PairPlan{}, faces, backend, store).records.empty());
    }
    SUBCASE("three transient faults") {
        std::set<std::pair<std::string, std::string>> flaky;
        const auto all = plan.all();
        for (int k : {0, 50, 170}) flaky.insert({faces[all[k].pair.first].face_id, faces[all[k].pair.second].face_id});
        FakeBackend backend(flaky);
        ScoreStore store;
        CollectStats stats;
        CollectOptions opts;
        opts.parallelism = 4;
        const auto table = collect_scores(plan, faces, backend, store, opts, &stats);
        CHECK(table.records.size() == 180);
        for (const auto& r : table.records) CHECK(r.disposition == Disposition::Ok);
        CHECK(stats.retries == 3);
        CHECK(stats.failures == 0);
        CHECK(backend.calls == 183);
    }
    SUBCASE("warm cache makes no calls") {
        const auto path = std::filesystem::temp_directory_path() / "fvb_scores_test.jsonl";
        std::filesystem::remove(path);
        {
            FakeBackend backend;
            ScoreStore store(path);
            collect_scores(plan, faces, backend, store);
            CHECK(backend.calls == 180);
        }
        FakeBackend backend;
        ScoreStore store(path);
        CHECK(store.size() == 180);
        CollectStats stats;
        const auto table = collect_scores(plan, faces, backend, store, {}, &stats);
        CHECK(backend.calls == 0);
        CHECK(stats.cache_hits == 180);
        CHECK(table.find(plan.same_query[0])->raw == 90.0);
        std::filesystem::remove(path);
    }
    SUBCASE("exhausted retries mark the pair failed, too many failures abort") {
        std::set<std::pair<std::string, std::string>> flaky;
        const auto all = plan.all();
        // only one attempt is flaky per entry, so with zero retries the pair fails
        flaky.insert({faces[all[3].pair.first].face_id, faces[all[3].pair.second].face_id});
        FakeBackend backend(flaky);
        ScoreStore store;
        CollectOptions opts;
        opts.retry.max_retries = 0;
        const auto table = collect_scores(plan, faces, backend, store, opts);
        CHECK(table.find(all[3].pair)->disposition == Disposition::Failed);

        std::set<std::pair<std::string, std::string>> many;
        for (int k = 0; k < 20; ++k) many.insert({faces[all[k].pair.first].face_id, faces[all[k].pair.second].face_id});
        FakeBackend worse(many);
        ScoreStore store2;
        CHECK_THROWS_AS(collect_scores(plan, faces, worse, store2, opts), RunAbortedError);
    }
}

TEST_CASE("bimodal mode fit") {
    SUBCASE("planted mixture") {
        const auto s = two_gaussians(500, 0.1, 0.9, 0.02, 3);
        const auto m = fit_bimodal_modes(s);
        CHECK(std::abs(m.m0 - 0.1) <= 0.02);
        CHECK(std::abs(m.m1 - 0.9) <= 0.02);
    }
    SUBCASE("two atoms") {
        std::vector<double> s(100, 0.2);
        s.insert(s.end(), 100, 0.8);
        const auto m = fit_bimodal_modes(s);
        CHECK(m.m0 == doctest::Approx(0.2));
        CHECK(m.m1 == doctest::Approx(0.8));
    }
    SUBCASE("unimodal sample") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.5, 0.1);
        std::vector<double> s;
        for (int i = 0; i < 1000; ++i) s.push_back(n(rng));
        CHECK_THROWS_AS(fit_bimodal_modes(s), DegenerateFitError);
    }
    SUBCASE("too few distinct values") {
        const std::vector<double> s(10, 0.3);
        CHECK_THROWS_AS(fit_bimodal_modes(s), ValidationError);
    }
}

TEST_CASE("normalization") {
    const ModePair m{20, 90};
    CHECK(normalize_score(55, m) == doctest::Approx(0.5));
    CHECK(normalize_score(90, m) == 1.0);
    CHECK(normalize_score(5, m) == 0.0);
    CHECK(normalize_score(100, m) == 1.0);
    CHECK_THROWS_AS(normalize_score(1, ModePair{3, 3}), ValidationError);
    double prev = -1;
    for (double x = 0; x <= 100; x += 0.5) {
        const double y = normalize_score(x, m);
        CHECK(y >= prev);
        prev = y;
    }
    for (double x : {0.0, 0.25, 0.5, 1.0}) CHECK(normalize_score(x, ModePair{0, 1}) == x);
}

TEST_CASE("confidence matrix assembly") {
    const auto faces = make_faces({{"q1", "g"}}, 8);
    const auto plan = build_pair_plan(faces, 1);
    ScoreTable table;
    table.service = "s";
    for (const auto& p : plan.all()) {
        ScoreRecord r{p.pair, p.kind, Disposition::Ok, 1.0, 1.0};
        if (p.pair.first == 3 || p.pair.second == 3) r.disposition = Disposition::Failed;
        table.records.push_back(r);
    }
    std::vector<FaceIndex> q(8);
    for (FaceIndex i = 0; i < 8; ++i) q[i] = i;

    SUBCASE("one face with seven failed pairs is dropped") {
        const auto a = assemble_confidence_matrix("q1", q, table, 5);
        REQUIRE(a.matrix.has_value());
        CHECK(a.matrix->size() == 7);
        CHECK(a.dropped == std::vector<FaceIndex>{3});
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(a.matrix->at(i, j) == 1.0);
                CHECK(a.matrix->at(i, j) == a.matrix->at(j, i));
            }
    }
    SUBCASE("too few survivors") {
        CHECK_FALSE(assemble_confidence_matrix("q1", q, table, 8).matrix.has_value());
    }
    SUBCASE("invariants are checked") {
        const std::vector<double> bad{1, 0.5, 0.4, 1};
        CHECK_THROWS_AS(ConfidenceMatrix::from_dense("q", "s", {0, 1}, bad), ValidationError);
        const std::vector<double> off{0.9, 0.5, 0.5, 1};
        CHECK_THROWS_AS(ConfidenceMatrix::from_dense("q", "s", {0, 1}, off), ValidationError);
    }
}
