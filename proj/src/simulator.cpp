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

#include "fvbench/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/random.hpp"

namespace fvbench::simulator {

namespace {

using json = nlohmann::json;

// Stream tags.
constexpr std::uint64_t kQueryTag = 0x5155;
constexpr std::uint64_t kImageTag = 0x494d;
constexpr std::uint64_t kScoreTag = 0x5343;
constexpr std::uint64_t kFaultTag = 0x4641;
constexpr std::uint64_t kBoxTag = 0x4258;

bool in_unit(double p) { return p >= 0.0 && p <= 1.0; }

std::vector<std::string> split_group(const std::string& key) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto bar = key.find('|', start);
        parts.push_back(key.substr(start, bar - start));
        if (bar == std::string::npos) break;
        start = bar + 1;
    }
    return parts;
}

std::string numbered(const char* prefix, std::size_t n, int width) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, n);
    return buf;
}

// Spells n in base 26 so generated names survive name normalization intact.
std::string letters(std::size_t n) {
    std::string s;
    for (int k = 0; k < 4; ++k) {
        s.insert(s.begin(), static_cast<char>('a' + n % 26));
        n /= 26;
    }
    s[0] = static_cast<char>(std::toupper(s[0]));
    return s;
}

corpus::Date minus_days(const corpus::Date& d, int days) {
    return corpus::Date{std::chrono::sys_days(d) - std::chrono::days(days)};
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (auto& x : v) x = standard_normal(rng);
    return v;
}

double truncated_normal(Rng& rng, double mean, double sd, const scoring::ScoreRange& range) {
    for (int k = 0; k < 64; ++k) {
        const double x = mean + sd * standard_normal(rng);
        if (range.contains(x)) return x;
    }
    return std::clamp(mean, range.lo, range.hi);
}

double offset_for(const std::map<std::string, double>& offsets, const std::string& group) {
    auto it = offsets.find(group);
    return it == offsets.end() ? 0.0 : it->second;
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        const auto& v = j.at(key);
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
            if (v.is_number_integer() && !v.is_number_unsigned())
                throw ValidationError(std::string(key) + " must be non-negative");
        out = v.get<T>();
    }
}

Distribution read_distribution(const json& j) {
    Distribution d;
    read_if(j, "mean", d.mean);
    read_if(j, "sd", d.sd);
    return d;
}

}  // namespace

void WorldConfig::validate() const {
    if (n_queries == 0) throw ValidationError("world needs at least one query");
    if (faces_min < 2) throw ValidationError("faces_min must be at least 2");
    if (faces_max < faces_min) throw ValidationError("faces_max must be >= faces_min");
    if (!(contamination_min > 0.0 && contamination_min <= contamination_max && contamination_max <= 1.0))
        throw ValidationError("contamination range must satisfy 0 < min <= max <= 1");
    for (double p : {second_identity_prob, multi_face_rate, duplicate_rate, stale_rate, undated_rate,
                     double_detection_rate})
        if (!in_unit(p)) throw ValidationError("world rates must lie in [0,1]");
    if (stale_rate + undated_rate > 1.0) throw ValidationError("stale_rate + undated_rate exceeds 1");
    if (groups.empty()) throw ValidationError("world needs at least one demographic group");
    for (const auto& g : groups)
        if (split_group(g).size() != 3) throw ValidationError("group '" + g + "' is not gender|group|age_band");
    if (embedding_dim < 2) throw ValidationError("embedding_dim must be at least 2");
    if (box_jitter < 0.0) throw ValidationError("box_jitter must be >= 0");
    if (window_months < 0) throw ValidationError("window_months must be >= 0");
}

void ServiceModel::validate() const {
    if (service_id.empty()) throw ValidationError("service model needs an id");
    if (!(range.lo < range.hi)) throw ValidationError(service_id + ": native range must satisfy lo < hi");
    if (!(genuine.sd > 0.0 && impostor.sd > 0.0)) throw ValidationError(service_id + ": sd must be positive");
    if (!(genuine.mean > impostor.mean)) throw ValidationError(service_id + ": genuine mean must exceed impostor mean");
    if (!(fault_rate >= 0.0 && fault_rate < 1.0)) throw ValidationError(service_id + ": fault_rate must be in [0,1)");
}

// --- World ---

const SimImage& World::image(const std::string& image_id) const {
    auto it = image_index_.find(image_id);
    if (it == image_index_.end()) throw ValidationError("unknown image '" + image_id + "'");
    return images[it->second];
}

const SimQuery& World::query(const std::string& query_id) const {
    auto it = query_index_.find(query_id);
    if (it == query_index_.end()) throw ValidationError("unknown query '" + query_id + "'");
    return queries[it->second];
}

std::vector<corpus::NameEntry> World::name_entries() const {
    std::vector<corpus::NameEntry> out;
    for (const auto& q : queries) out.push_back(q.entry);
    return out;
}

Label World::y_star(const SimImage& img) const {
    return img.identity == query(img.query_id).identity ? Label::Correct : Label::Other;
}

FaceTable World::faces() const {
    FaceTable out;
    for (const auto& img : images) {
        if (!img.in_window || img.multi_face || !img.duplicate_of.empty()) continue;
        out.push_back({img.image_id + "#0", img.query_id, img.group, img.image_id});
    }
    return out;
}

Labels World::true_labels(const FaceTable& faces) const {
    Labels out;
    out.reserve(faces.size());
    for (const auto& f : faces) out.push_back(y_star(image(f.image_id)));
    return out;
}

std::map<std::string, Label> World::annotations(const FaceTable& faces) const {
    std::map<std::string, Label> out;
    for (const auto& f : faces) out[f.face_id] = y_star(image(f.image_id));
    return out;
}

std::vector<detection::Box> World::detections(const std::string& image_id, const std::string& service_id) const {
    const auto& img = image(image_id);
    const std::uint64_t seed = config.seed;
    const std::size_t count = img.multi_face ? 2 : 1;
    std::vector<detection::Box> out;
    for (std::size_t k = 0; k < count; ++k) {
        auto base = make_rng({seed, kBoxTag, fnv1a(image_id), k});
        const double bx = 40.0 + 160.0 * static_cast<double>(k) + 20.0 * uniform01(base);
        const double by = 30.0 + 20.0 * uniform01(base);
        const double side = 80.0 + 20.0 * uniform01(base);

        auto jitter = make_rng({seed, kBoxTag, fnv1a(service_id), fnv1a(image_id), k});
        const double j = config.box_jitter;
        detection::Box b{image_id, service_id, bx + j * standard_normal(jitter), by + j * standard_normal(jitter),
                         side + j * standard_normal(jitter), side + j * standard_normal(jitter)};
        b.w = std::max(b.w, 1.0);
        b.h = std::max(b.h, 1.0);
        out.push_back(b);
        if (uniform01(jitter) < config.double_detection_rate) {
            detection::Box extra = b;
            extra.x += 0.25 * b.w;
            extra.y += 0.25 * b.h;
            out.push_back(extra);
        }
    }
    return out;
}

World generate_world(const WorldConfig& config) {
    config.validate();
    World w;
    w.config = config;
    const std::uint64_t seed = config.seed;
    const int window_days = config.window_months * 30;

    for (std::size_t q = 0; q < config.n_queries; ++q) {
        auto rng = make_rng({seed, kQueryTag, q});
        SimQuery sq;
        sq.query_id = numbered("q", q + 1, 4);
        const auto& group = config.groups[q % config.groups.size()];
        const auto parts = split_group(group);
        sq.entry.name = "Person " + letters(q);
        sq.entry.demographic = {parts[0], parts[1], parts[2]};
        sq.query_string = corpus::build_query(sq.entry, sq.query_id, q).query_string;
        sq.identity = sq.query_id + ":p";

        const std::size_t n =
            config.faces_min + static_cast<std::size_t>(uniform_below(rng, config.faces_max - config.faces_min + 1));
        const double c = config.contamination_min + (config.contamination_max - config.contamination_min) * uniform01(rng);
        const auto n_prev = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(c * n - 1e-9)), 1, n);
        std::size_t n_second = 0;
        if (uniform01(rng) < config.second_identity_prob) {
            n_second = std::min(n - n_prev, n_prev);
            if (n_second > 0) sq.second_identity = sq.query_id + ":s";
        }

        std::vector<std::string> identities;
        identities.insert(identities.end(), n_prev, sq.identity);
        identities.insert(identities.end(), n_second, sq.second_identity);
        for (std::size_t k = 0; identities.size() < n; ++k) identities.push_back(sq.query_id + ":d" + std::to_string(k));
        for (std::size_t i = n - 1; i > 0; --i) std::swap(identities[i], identities[uniform_below(rng, i + 1)]);

        sq.first_image = w.images.size();
        for (std::size_t i = 0; i < n; ++i) {
            auto irng = make_rng({seed, kImageTag, q, i});
            SimImage img;
            img.image_id = sq.query_id + numbered("-i", i + 1, 3);
            img.query_id = sq.query_id;
            img.identity = identities[i];
            img.group = group;
            if (uniform01(irng) < config.multi_face_rate) {
                img.multi_face = true;
                img.second_identity = sq.query_id + ":x" + std::to_string(i);
            }
            const double d = uniform01(irng);
            if (d < config.stale_rate) {
                img.published_at = minus_days(config.reference_date,
                                              window_days + 31 + static_cast<int>(uniform_below(irng, 700)));
                img.in_window = false;
            } else if (d >= config.stale_rate + config.undated_rate) {
                img.published_at =
                    minus_days(config.reference_date, static_cast<int>(uniform_below(irng, std::max(window_days - 5, 1))));
            }
            img.embedding = gaussian_vector(irng, config.embedding_dim);
            const bool duplicate = uniform01(irng) < config.duplicate_rate;
            w.images.push_back(img);

            if (duplicate) {
                SimImage copy = img;
                copy.image_id = img.image_id + "d";
                copy.duplicate_of = img.image_id;
                for (auto& x : copy.embedding) x += 0.05 * standard_normal(irng);
                w.images.push_back(std::move(copy));
            }
        }
        sq.image_count = w.images.size() - sq.first_image;
        w.queries.push_back(std::move(sq));
    }
    for (std::size_t i = 0; i < w.images.size(); ++i) w.image_index_.emplace(w.images[i].image_id, i);
    for (std::size_t i = 0; i < w.queries.size(); ++i) w.query_index_.emplace(w.queries[i].query_id, i);
    return w;
}

std::optional<double> simulate_score(const World& world, const std::string& image_a, const std::string& image_b,
                                     const ServiceModel& model, std::uint64_t seed) {
    const auto& a = world.image(image_a);
    const auto& b = world.image(image_b);
    if (a.multi_face || b.multi_face) return std::nullopt;
    const auto& lo = std::min(image_a, image_b);
    const auto& hi = std::max(image_a, image_b);
    auto rng = make_rng({seed, kScoreTag, fnv1a(model.service_id), fnv1a(lo), fnv1a(hi)});
    const bool genuine = a.identity == b.identity;
    const auto& dist = genuine ? model.genuine : model.impostor;
    double mean = dist.mean;
    if (a.group == b.group) mean += offset_for(genuine ? model.genuine_offsets : model.impostor_offsets, a.group);
    return truncated_normal(rng, mean, dist.sd, model.range);
}

// --- SimulatedBackend ---

SimulatedBackend::SimulatedBackend(std::shared_ptr<const World> world, ServiceModel model, std::uint64_t seed)
    : world_(std::move(world)), model_(std::move(model)), seed_(seed) {
    if (!world_) throw ValidationError("simulated backend needs a world");
    model_.validate();
}

detection::CompareOutcome SimulatedBackend::compare(const FaceRecord& a, const FaceRecord& b) {
    return compare_images(a.image_id, b.image_id);
}

detection::ImageComparator SimulatedBackend::comparator() {
    return [this](const std::string& a, const std::string& b) { return compare_images(a, b); };
}

detection::CompareOutcome SimulatedBackend::compare_images(const std::string& a, const std::string& b) {
    ++calls_;
    const auto& lo = std::min(a, b);
    const auto& hi = std::max(a, b);
    if (model_.fault_rate > 0.0) {
        std::uint32_t attempt;
        {
            std::lock_guard lock(mutex_);
            attempt = attempts_[{lo, hi}]++;
        }
        auto rng = make_rng({seed_, kFaultTag, fnv1a(model_.service_id), fnv1a(lo), fnv1a(hi), attempt});
        if (uniform01(rng) < model_.fault_rate) {
            ++faults_;
            throw TransportError(model_.service_id + ": simulated transport fault");
        }
    }
    const auto s = simulate_score(*world_, a, b, model_, seed_);
    return s ? detection::CompareOutcome::value(*s) : detection::CompareOutcome::invalid();
}

// --- SimulatedProvider ---

SimulatedProvider::SimulatedProvider(std::shared_ptr<const World> world) : world_(std::move(world)) {
    if (!world_) throw ValidationError("simulated provider needs a world");
    for (std::size_t i = 0; i < world_->queries.size(); ++i) by_query_string_.emplace(world_->queries[i].query_string, i);
}

std::vector<corpus::ProviderRef> SimulatedProvider::fetch(const std::string& query_string, std::size_t max_results,
                                                          const corpus::FetchWindow&) {
    std::vector<corpus::ProviderRef> out;
    auto it = by_query_string_.find(query_string);
    if (it == by_query_string_.end()) return out;
    const auto& q = world_->queries[it->second];
    for (std::size_t i = 0; i < q.image_count && out.size() < max_results; ++i) {
        const auto& img = world_->images[q.first_image + i];
        out.push_back({img.image_id, img.published_at});
    }
    return out;
}

// --- reference curves ---

evaluation::EvalCurve true_curve(const World& world, const FaceTable& faces, const scoring::ScoreTable& table) {
    const auto sets = evaluation::build_score_sets(table, faces, world.true_labels(faces));
    return evaluation::fmr_fnmr_curve(sets.genuine, sets.impostor);
}

scoring::ScoreTable simulate_table(const World& world, const FaceTable& faces, const scoring::PairPlan& plan,
                                   const ServiceModel& model, std::uint64_t seed) {
    scoring::ScoreTable t;
    t.service = model.service_id;
    for (const auto& p : plan.all()) {
        scoring::ScoreRecord r;
        r.pair = p.pair;
        r.kind = p.kind;
        const auto s =
            simulate_score(world, faces.at(p.pair.first).image_id, faces.at(p.pair.second).image_id, model, seed);
        if (s)
            r.raw = *s;
        else
            r.disposition = scoring::Disposition::Invalid;
        t.records.push_back(r);
    }
    return t;
}

evaluation::EvalCurve true_curve(const World& world, const ServiceModel& model, std::uint64_t seed) {
    const auto faces = world.faces();
    const auto plan = scoring::build_pair_plan(faces, seed);
    return true_curve(world, faces, simulate_table(world, faces, plan, model, seed));
}

// --- configuration ---

WorldConfig world_config_from_json(const std::string& json_text) {
    WorldConfig c;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw ValidationError("world config must be a JSON object");
        read_if(j, "n_queries", c.n_queries);
        read_if(j, "faces_min", c.faces_min);
        read_if(j, "faces_max", c.faces_max);
        read_if(j, "contamination_min", c.contamination_min);
        read_if(j, "contamination_max", c.contamination_max);
        read_if(j, "second_identity_prob", c.second_identity_prob);
        read_if(j, "groups", c.groups);
        read_if(j, "seed", c.seed);
        read_if(j, "multi_face_rate", c.multi_face_rate);
        read_if(j, "duplicate_rate", c.duplicate_rate);
        read_if(j, "stale_rate", c.stale_rate);
        read_if(j, "undated_rate", c.undated_rate);
        read_if(j, "double_detection_rate", c.double_detection_rate);
        read_if(j, "box_jitter", c.box_jitter);
        read_if(j, "embedding_dim", c.embedding_dim);
        read_if(j, "window_months", c.window_months);
        if (j.contains("reference_date")) c.reference_date = corpus::parse_iso_date(j.at("reference_date").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("world config: ") + e.what());
    }
    c.validate();
    return c;
}

ServiceModel service_model_from_json(const std::string& json_text) {
    ServiceModel m;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw ValidationError("service model must be a JSON object");
        read_if(j, "id", m.service_id);
        if (j.contains("genuine")) m.genuine = read_distribution(j.at("genuine"));
        if (j.contains("impostor")) m.impostor = read_distribution(j.at("impostor"));
        read_if(j, "genuine_offsets", m.genuine_offsets);
        read_if(j, "impostor_offsets", m.impostor_offsets);
        if (j.contains("range")) {
            const auto r = j.at("range").get<std::vector<double>>();
            if (r.size() != 2) throw ValidationError("range must be [lo, hi]");
            m.range = {r[0], r[1]};
        }
        read_if(j, "fault_rate", m.fault_rate);
        read_if(j, "detector", m.detector);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("service model: ") + e.what());
    }
    m.validate();
    return m;
}

std::string world_config_to_json(const WorldConfig& c) {
    json j = {{"n_queries", c.n_queries},
              {"faces_min", c.faces_min},
              {"faces_max", c.faces_max},
              {"contamination_min", c.contamination_min},
              {"contamination_max", c.contamination_max},
              {"second_identity_prob", c.second_identity_prob},
              {"groups", c.groups},
              {"seed", c.seed},
              {"multi_face_rate", c.multi_face_rate},
              {"duplicate_rate", c.duplicate_rate},
              {"stale_rate", c.stale_rate},
              {"undated_rate", c.undated_rate},
              {"double_detection_rate", c.double_detection_rate},
              {"box_jitter", c.box_jitter},
              {"embedding_dim", c.embedding_dim},
              {"reference_date", corpus::format_iso_date(c.reference_date)},
              {"window_months", c.window_months}};
    return j.dump();
}

std::string service_model_to_json(const ServiceModel& m) {
    json j = {{"id", m.service_id},
              {"genuine", {{"mean", m.genuine.mean}, {"sd", m.genuine.sd}}},
              {"impostor", {{"mean", m.impostor.mean}, {"sd", m.impostor.sd}}},
              {"genuine_offsets", m.genuine_offsets},
              {"impostor_offsets", m.impostor_offsets},
              {"range", {m.range.lo, m.range.hi}},
              {"fault_rate", m.fault_rate},
              {"detector", m.detector}};
    return j.dump();
}

std::vector<ServiceModel> default_services(double separation_sd, std::size_t count) {
    if (!(separation_sd > 0.0)) throw ValidationError("separation must be positive");
    std::vector<ServiceModel> out;
    for (std::size_t k = 0; k < count; ++k) {
        ServiceModel m;
        m.service_id = std::string("svc_") + static_cast<char>('a' + k % 26);
        if (k >= 26) m.service_id += std::to_string(k / 26);
        const double scale = k % 2 ? 100.0 : 1.0;
        const double sd = 0.1;
        const double half = 0.5 * separation_sd * sd;
        m.genuine = {scale * (0.5 + half), scale * sd};
        m.impostor = {scale * (0.5 - half), scale * sd};
        m.range = {0.0, scale};
        out.push_back(std::move(m));
    }
    return out;
}

void write_world_dump(const std::filesystem::path& path, const World& world) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row({"face_id", "query_id", "true_identity", "demographic", "y_star"});
    for (const auto& img : world.images)
        w.row({img.image_id + "#0", img.query_id, img.identity, img.group, std::to_string(to_int(world.y_star(img)))});
}

}  // namespace fvbench::simulator
