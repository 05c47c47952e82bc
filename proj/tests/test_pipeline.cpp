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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/pipeline.hpp"

using namespace fvbench;
using namespace fvbench::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

simulator::WorldConfig small_world(std::uint64_t seed = 1) {
    simulator::WorldConfig w;
    w.n_queries = 16;
    w.seed = seed;
    return w;
}

RunConfig setup(const fs::path& dir, const simulator::WorldConfig& world, double sep = 6.0,
                double genuine_sd_factor = 1.0) {
    auto models = simulator::default_services(sep);
    for (auto& m : models) m.genuine.sd *= genuine_sd_factor;
    return RunConfig::load(write_simulation(dir, world, models, 1));
}

std::vector<bool> executed(const RunManifest& m) {
    std::vector<bool> out;
    for (const auto& r : m.stages) out.push_back(r.executed);
    return out;
}

std::vector<csv::Row> raw_rows(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return csv::read(in);
}

std::size_t data_rows(const fs::path& p) { return raw_rows(p).size() - 1; }

}  // namespace

TEST_CASE("full simulator run and the cache contract") {
    TempDir tmp("fvb_pipeline_full");
    auto config = setup(tmp.path, small_world());
    const auto first = run(config, kAllStages);
    REQUIRE(first.ok());
    CHECK(executed(first) == std::vector<bool>(6, true));
    for (const char* s : {"svc_a", "svc_b", "svc_c", "svc_d", "svc_e"})
        CHECK(fs::exists(config.output / (std::string("curves_") + s + ".csv")));
    for (const char* f : {"report.json", "bias.csv", "labels.csv", "ablation.csv", "composition.csv", "manifest.json"})
        CHECK(fs::exists(config.output / f));

    std::map<std::string, std::string> bytes;
    for (const auto& e : fs::directory_iterator(config.output))
        if (e.path().filename() != "manifest.json") bytes[e.path().filename().string()] = slurp(e.path());

    SUBCASE("unchanged config recomputes nothing") {
        const auto again = run(config, kAllStages);
        CHECK(executed(again) == std::vector<bool>(6, false));
        for (const auto& [name, content] : bytes) CHECK(slurp(config.output / name) == content);
    }
    SUBCASE("changing tau reruns estimation onward") {
        config.thresholds.tau = 0.3;
        const auto again = run(config, kAllStages);
        CHECK(executed(again) == std::vector<bool>{false, false, false, true, true, true});
    }
    SUBCASE("requesting a late stage reuses current upstream stages") {
        const std::vector<Stage> only{Stage::Report};
        CHECK(executed(run(config, only)) == std::vector<bool>(6, false));
        fs::remove(config.output / "labels.csv");
        const auto again = run(config, only);
        CHECK(executed(again) == std::vector<bool>{false, false, false, true, false, false});
        CHECK(slurp(config.output / "labels.csv") == bytes["labels.csv"]);
    }
    SUBCASE("worker count does not change data") {
        config.workers = 4;
        config.output = tmp.path / "run4";
        REQUIRE(run(config, kAllStages).ok());
        for (const auto& [name, content] : bytes) CHECK(slurp(config.output / name) == content);
    }
    SUBCASE("config hash ignores workers and output") {
        const auto h = config.hash();
        config.workers = 7;
        config.output = "elsewhere";
        CHECK(config.hash() == h);
        config.seed = 9;
        CHECK(config.hash() != h);
    }
}

TEST_CASE("a failing stage skips downstream stages") {
    TempDir tmp("fvb_pipeline_fail");
    auto config = setup(tmp.path, small_world());
    ServiceConfig replay;
    replay.id = "offline";
    replay.backend = "replay";
    replay.range = scoring::ScoreRange{0, 1};
    config.services.push_back(replay);
    const auto m = run(config, kAllStages);
    CHECK_FALSE(m.ok());
    CHECK(m.at(Stage::Source).status == StageStatus::Complete);
    CHECK(m.at(Stage::Score).status == StageStatus::Failed);
    CHECK_FALSE(m.at(Stage::Score).error.empty());
    CHECK(m.at(Stage::Estimate).status == StageStatus::Skipped);
    CHECK(m.at(Stage::Report).status == StageStatus::Skipped);
    CHECK(load_manifest(config.output).at(Stage::Score).status == StageStatus::Failed);
}

TEST_CASE("config validation") {
    TempDir tmp("fvb_pipeline_validate");
    const auto path = write_simulation(tmp.path, small_world(), simulator::default_services(6.0), 1);
    const auto text = slurp(path);
    CHECK_NOTHROW(RunConfig::from_json(text, tmp.path));
    CHECK_THROWS_AS(RunConfig::from_json("{\"simulator\": {\"world\": {}}}", tmp.path), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json("[]", tmp.path), ValidationError);
    auto bad = RunConfig::from_json(text, tmp.path);
    bad.thresholds.tau = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = RunConfig::from_json(text, tmp.path);
    bad.names = tmp.path / "missing.csv";
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = RunConfig::from_json(text, tmp.path);
    bad.services[0].backend = "simulator:nope";
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK(parse_stages("report,source") == std::vector<Stage>{Stage::Source, Stage::Report});
    CHECK(parse_stages("all").size() == 6);
    CHECK_THROWS_AS(parse_stages("nonsense"), ValidationError);
}

TEST_CASE("drift comparison") {
    TempDir tmp("fvb_pipeline_drift");
    auto a = setup(tmp.path / "a", small_world(), 4.0);
    REQUIRE(run(a, kAllStages).ok());

    SUBCASE("identical runs") {
        const auto d = compare_runs(a.output, a.output, "svc_a");
        CHECK(d.delta == 0.0);
        CHECK_FALSE(d.probable_model_change);
    }
    SUBCASE("doubled genuine spread") {
        auto b = setup(tmp.path / "b", small_world(), 4.0, 2.0);
        REQUIRE(run(b, kAllStages).ok());
        const auto d = compare_runs(a.output, b.output, "svc_a");
        CHECK(d.delta > 0.0);
        CHECK(d.probable_model_change);
    }
    SUBCASE("different queries, same model") {
        auto b = setup(tmp.path / "b", small_world(77), 4.0);
        REQUIRE(run(b, kAllStages).ok());
        CHECK_FALSE(compare_runs(a.output, b.output, "svc_a").probable_model_change);
    }
    SUBCASE("unknown service") {
        CHECK_THROWS_AS(compare_runs(a.output, a.output, "svc_z"), ValidationError);
    }
}

TEST_CASE("annotation round trip") {
    TempDir tmp("fvb_pipeline_annotate");
    auto world = small_world();
    world.second_identity_prob = 0.3;
    auto config = setup(tmp.path, world);
    CHECK_THROWS_AS(export_annotation_queue(config, 5, tmp.path / "q.csv"), ValidationError);
    REQUIRE(run(config, kAllStages).ok());

    CHECK(export_annotation_queue(config, 0, tmp.path / "q0.csv") == 0);
    CHECK(data_rows(tmp.path / "q0.csv") == 0);

    CHECK(export_annotation_queue(config, 10, tmp.path / "q10.csv") == 10);
    const auto rows = raw_rows(tmp.path / "q10.csv");
    REQUIRE(rows.size() == 11);
    bool seen_b = false;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        if (rows[k].fields[5] == "B") seen_b = true;
        if (seen_b) CHECK(rows[k].fields[5] == "B");
    }
    CHECK(rows[1].fields[5] == "A");

    const auto all = export_annotation_queue(config, 1000000, tmp.path / "all.csv");
    {
        std::ofstream out(tmp.path / "ann.csv");
        out << "face_id,y\n";
        for (std::size_t k = 1; k < rows.size(); ++k) out << rows[k].fields[1] << ",1\n";
    }
    CHECK(merge_annotations(config, tmp.path / "ann.csv") == 10);
    CHECK(export_annotation_queue(config, 1000000, tmp.path / "after.csv") == all - 10);

    // merged annotations invalidate estimation only
    const auto again = run(config, kAllStages);
    CHECK(executed(again) == std::vector<bool>{false, false, false, true, true, true});

    {
        std::ofstream out(tmp.path / "ghost.csv");
        out << "face_id,y\nnobody#0,1\n";
    }
    CHECK_THROWS_AS(merge_annotations(config, tmp.path / "ghost.csv"), ValidationError);
}

TEST_CASE("name list and provider manifest run") {
    TempDir tmp("fvb_pipeline_names");
    // Source names and manifest are exported from a simulator world so that
    // scoring can still use the simulator backend.
    const auto world = simulator::generate_world(small_world());
    {
        std::ofstream names(tmp.path / "names.csv");
        names << "name,gender,group,age_band,country\n";
        for (const auto& q : world.queries)
            names << q.entry.name << "," << q.entry.demographic.gender << "," << q.entry.demographic.group << ","
                  << q.entry.demographic.age_band << ",\n";
        std::ofstream manifest(tmp.path / "provider.json");
        manifest << "{";
        for (std::size_t i = 0; i < world.queries.size(); ++i) {
            const auto& q = world.queries[i];
            manifest << (i ? "," : "") << "\"" << q.query_string << "\": [";
            for (std::size_t k = 0; k < q.image_count; ++k) {
                const auto& img = world.images[q.first_image + k];
                manifest << (k ? "," : "") << "{\"url\": \"" << img.image_id << "\", \"published_at\": \""
                         << corpus::format_iso_date(*img.published_at) << "\"}";
            }
            manifest << "]";
        }
        manifest << "}";
    }
    auto config = setup(tmp.path, small_world());
    config.names = tmp.path / "names.csv";
    config.provider_manifest = tmp.path / "provider.json";
    config.output = tmp.path / "named";
    REQUIRE(run(config, kAllStages).ok());
    auto plain = setup(tmp.path, small_world());
    plain.output = tmp.path / "plain";
    REQUIRE(run(plain, kAllStages).ok());
    CHECK(slurp(config.output / "labels.csv") == slurp(plain.output / "labels.csv"));
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
