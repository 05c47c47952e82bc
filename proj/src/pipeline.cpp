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

#include "fvbench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <type_traits>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "fvbench/csv.hpp"
#include "fvbench/detection.hpp"
#include "fvbench/errors.hpp"
#include "fvbench/evaluation.hpp"

namespace fvbench::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::string> kQueriesHeader = {"query_id", "query_string", "gender", "group", "age_band"};
const std::vector<std::string> kImagesHeader = {"query_id", "image_id", "published_at"};
const std::vector<std::string> kFacesHeader = {"face_id", "query_id", "group", "image_id"};
const std::vector<std::string> kScoresHeader = {"service", "face_i", "face_j", "kind", "disposition", "raw"};
const std::vector<std::string> kQueueHeader = {"rank",      "face_id",    "query_id",    "query_string", "image_id",
                                               "kind",      "query_size", "ambiguity",   "estimated_y"};
constexpr double kReportFmrs[] = {0.01, 0.001};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

std::string file_hash(const std::optional<fs::path>& path) {
    if (!path) return "";
    return sha256_hex(read_text(*path));
}

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// --- configuration parsing ---

template <class T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) {
        const auto& v = j.at(key);
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>)
            if (v.is_number_integer() && !v.is_number_unsigned())
                throw ValidationError(std::string(key) + " must be non-negative");
        out = v.get<T>();
    }
}

std::optional<fs::path> read_path(const json& j, const char* key, const fs::path& base) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    fs::path p = j.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

scoring::ScoreRange read_range(const json& j) {
    const auto r = j.get<std::vector<double>>();
    if (r.size() != 2) throw ValidationError("range must be [lo, hi]");
    return {r[0], r[1]};
}

json range_json(const scoring::ScoreRange& r) { return json::array({r.lo, r.hi}); }

// --- backends ---

class ReplayBackend final : public scoring::ServiceBackend {
public:
    ReplayBackend(std::string id, scoring::ScoreRange range) : id_(std::move(id)), range_(range) {}
    const std::string& id() const override { return id_; }
    scoring::ScoreRange range() const override { return range_; }
    detection::CompareOutcome compare(const FaceRecord&, const FaceRecord&) override {
        throw TransportError(id_ + ": replay backend serves cached scores only");
    }

private:
    std::string id_;
    scoring::ScoreRange range_;
};

struct Context {
    const RunConfig& config;
    fs::path out;
    std::shared_ptr<const simulator::World> world;
};

const simulator::ServiceModel& model_for(const RunConfig& config, const ServiceConfig& s) {
    const auto name = s.backend.substr(std::string("simulator:").size());
    auto it = config.models.find(name);
    if (it == config.models.end()) throw ValidationError(s.id + ": unknown simulator model '" + name + "'");
    return it->second;
}

std::unique_ptr<simulator::SimulatedBackend> make_simulated(const Context& ctx, const ServiceConfig& s) {
    if (!ctx.world) throw ValidationError(s.id + ": simulator backend needs a simulator world");
    auto model = model_for(ctx.config, s);
    model.service_id = s.id;
    if (s.range) model.range = *s.range;
    return std::make_unique<simulator::SimulatedBackend>(ctx.world, std::move(model), ctx.config.seed);
}

std::unique_ptr<scoring::ServiceBackend> make_backend(const Context& ctx, const ServiceConfig& s) {
    if (s.backend.starts_with("simulator:")) return make_simulated(ctx, s);
    return std::make_unique<ReplayBackend>(s.id, *s.range);
}

// --- artifact io ---

struct QueryRow {
    corpus::Query query;
    corpus::DemographicKey demographic;
};

std::vector<QueryRow> read_queries(const fs::path& path) {
    std::vector<QueryRow> out;
    for (const auto& r : csv::read_file(path, kQueriesHeader))
        out.push_back({corpus::Query{r.fields[0], r.fields[1], out.size()}, {r.fields[2], r.fields[3], r.fields[4]}});
    return out;
}

struct ImageRow {
    std::string query_id;
    std::string image_id;
};

std::vector<ImageRow> read_images(const fs::path& path) {
    std::vector<ImageRow> out;
    for (const auto& r : csv::read_file(path, kImagesHeader)) out.push_back({r.fields[0], r.fields[1]});
    return out;
}

void write_faces(const fs::path& path, const FaceTable& faces) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row(kFacesHeader);
    for (const auto& f : faces) w.row({f.face_id, f.query_id, f.group, f.image_id});
}

FaceTable read_faces(const fs::path& path) {
    FaceTable out;
    for (const auto& r : csv::read_file(path, kFacesHeader)) out.push_back({r.fields[0], r.fields[1], r.fields[2], r.fields[3]});
    return out;
}

std::vector<scoring::ScoreTable> read_scores(const fs::path& path, const FaceTable& faces,
                                             const std::vector<ServiceConfig>& services) {
    std::unordered_map<std::string, FaceIndex> index;
    for (FaceIndex f = 0; f < faces.size(); ++f) index.emplace(faces[f].face_id, f);
    std::map<std::string, scoring::ScoreTable> by_service;
    for (const auto& r : csv::read_file(path, kScoresHeader)) {
        auto a = index.find(r.fields[1]);
        auto b = index.find(r.fields[2]);
        if (a == index.end() || b == index.end()) throw ParseError("score row names an unknown face", r.line);
        scoring::ScoreRecord rec;
        rec.pair = FacePair::canonical(a->second, b->second);
        rec.kind = r.fields[3] == "same" ? PairKind::SameQuery : PairKind::CrossQuery;
        rec.disposition = scoring::disposition_from_string(r.fields[4]);
        if (rec.disposition == scoring::Disposition::Ok) rec.raw = csv::parse_double(r.fields[5], r.line);
        auto& t = by_service[r.fields[0]];
        t.service = r.fields[0];
        t.records.push_back(rec);
    }
    std::vector<scoring::ScoreTable> out;
    for (const auto& s : services) {
        auto it = by_service.find(s.id);
        if (it == by_service.end()) throw ValidationError("no scores for service " + s.id);
        std::sort(it->second.records.begin(), it->second.records.end(),
                  [](const auto& x, const auto& y) { return x.pair < y.pair; });
        out.push_back(std::move(it->second));
    }
    return out;
}

std::map<std::string, scoring::ModePair> read_modes(const fs::path& path) {
    std::map<std::string, scoring::ModePair> out;
    const json j = json::parse(read_text(path));
    for (const auto& [service, m] : j.items()) out[service] = {m.at("m0").get<double>(), m.at("m1").get<double>()};
    return out;
}

std::vector<scoring::ScoreTable> normalized_tables(std::vector<scoring::ScoreTable> tables,
                                                   const std::map<std::string, scoring::ModePair>& modes) {
    for (auto& t : tables) {
        auto it = modes.find(t.service);
        if (it == modes.end()) throw ValidationError("no modes for service " + t.service);
        scoring::normalize_table(t, it->second);
    }
    return tables;
}

/// Labels from an annotation map aligned with `faces`; unknown faces get -1.
Labels labels_from_map(const FaceTable& faces, const std::map<std::string, Label>& m) {
    Labels out(faces.size(), Label::Unknown);
    for (FaceIndex f = 0; f < faces.size(); ++f)
        if (auto it = m.find(faces[f].face_id); it != m.end()) out[f] = it->second;
    return out;
}

std::optional<std::map<std::string, Label>> truth_map(const Context& ctx, const FaceTable& faces) {
    if (ctx.config.annotations) return estimation::read_annotations(*ctx.config.annotations);
    if (ctx.world) {
        std::map<std::string, Label> out;
        for (const auto& f : faces) out[f.face_id] = ctx.world->y_star(ctx.world->image(f.image_id));
        return out;
    }
    return std::nullopt;
}

fs::path merged_annotations_path(const fs::path& out) { return out / "annotations.csv"; }

std::map<std::string, Label> merged_annotations(const fs::path& out) {
    const auto p = merged_annotations_path(out);
    if (!fs::exists(p)) return {};
    return estimation::read_annotations(p);
}

// --- stages ---

std::vector<std::string> stage_source(const Context& ctx) {
    const auto& c = ctx.config;
    std::vector<corpus::NameEntry> entries;
    if (c.names) {
        const auto schema = c.schema ? corpus::DemographicSchema::load(*c.schema) : corpus::DemographicSchema::defaults();
        entries = corpus::load_name_list(*c.names, schema);
    } else {
        entries = ctx.world->name_entries();
    }
    const auto queries = corpus::build_queries(entries);

    std::unique_ptr<corpus::ImageProvider> provider;
    if (c.provider_manifest)
        provider = std::make_unique<corpus::ManifestProvider>(*c.provider_manifest);
    else
        provider = std::make_unique<simulator::SimulatedProvider>(ctx.world);
    const auto refs = corpus::fetch_all(queries, *provider, c.fetch, c.workers);

    {
        std::ofstream out(ctx.out / "queries.csv", std::ios::binary);
        csv::Writer w(out);
        w.row(kQueriesHeader);
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto& d = entries[i].demographic;
            w.row({queries[i].query_id, queries[i].query_string, d.gender, d.group, d.age_band});
        }
    }

    if (!ctx.world) spdlog::info("no embedding source configured, near-duplicate removal skipped");
    std::set<std::string> seen;
    std::ofstream out(ctx.out / "images.csv", std::ios::binary);
    csv::Writer w(out);
    w.row(kImagesHeader);
    std::size_t kept = 0, dropped = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        std::set<std::string> keep;
        if (ctx.world) {
            std::vector<corpus::EmbeddedItem> items;
            for (const auto& r : refs[i]) items.push_back({r.url, ctx.world->image(r.url).embedding});
            const auto ids = corpus::deduplicate(items, c.dedup_threshold);
            keep.insert(ids.begin(), ids.end());
        } else {
            for (const auto& r : refs[i]) keep.insert(r.url);
        }
        for (const auto& r : refs[i]) {
            if (!keep.contains(r.url)) {
                ++dropped;
                continue;
            }
            if (!seen.insert(r.url).second) {
                spdlog::warn("image {} already listed under another query, ignored for {}", r.url, queries[i].query_id);
                continue;
            }
            w.row({queries[i].query_id, r.url, r.published_at ? corpus::format_iso_date(*r.published_at) : ""});
            ++kept;
        }
    }
    spdlog::info("source: {} queries, {} images kept, {} near duplicates dropped", queries.size(), kept, dropped);
    return {"queries.csv", "images.csv"};
}

std::vector<std::string> stage_detect(const Context& ctx) {
    const auto& c = ctx.config;
    const auto queries = read_queries(ctx.out / "queries.csv");
    const auto images = read_images(ctx.out / "images.csv");
    std::map<std::string, std::string> group_of;
    for (const auto& q : queries) group_of[q.query.query_id] = q.demographic.str();

    std::vector<std::string> detecting;
    std::vector<const ServiceConfig*> discovering;
    for (const auto& s : c.services) {
        if (s.detector)
            detecting.push_back(s.id);
        else
            discovering.push_back(&s);
    }
    std::sort(detecting.begin(), detecting.end());

    std::map<std::string, std::vector<detection::Box>> boxes_of;
    if (!detecting.empty()) {
        if (c.detections) {
            for (auto& b : detection::read_detections(*c.detections)) boxes_of[b.image_id].push_back(std::move(b));
        } else if (ctx.world) {
            for (const auto& img : images)
                for (const auto& s : detecting) {
                    auto b = ctx.world->detections(img.image_id, s);
                    auto& list = boxes_of[img.image_id];
                    list.insert(list.end(), b.begin(), b.end());
                }
        } else {
            throw ValidationError("detecting services need a detections file or a simulator world");
        }
    }

    std::vector<detection::Box> all_boxes;
    std::vector<detection::FaceGroup> all_groups;
    std::vector<std::pair<ImageRow, std::string>> eligible;  // image, face id
    std::size_t excluded = 0;
    for (const auto& img : images) {
        if (detecting.empty()) {
            eligible.push_back({img, img.image_id + "#0"});
            continue;
        }
        std::vector<detection::Box> boxes;
        if (auto it = boxes_of.find(img.image_id); it != boxes_of.end())
            for (const auto& b : it->second)
                if (std::find(detecting.begin(), detecting.end(), b.service_id) != detecting.end()) boxes.push_back(b);
        const auto groups = detection::group_detections(boxes, c.iou_threshold);
        all_boxes.insert(all_boxes.end(), boxes.begin(), boxes.end());
        all_groups.insert(all_groups.end(), groups.begin(), groups.end());
        if (auto g = detection::filter_eligible(groups, boxes, detecting))
            eligible.push_back({img, g->face_id});
        else
            ++excluded;
    }

    // Services without a detector learn which images hold one face from
    // their own pairwise responses.
    for (const auto* s : discovering) {
        auto backend = make_simulated(ctx, *s);
        std::map<std::string, std::vector<std::string>> by_query;
        for (const auto& [img, face] : eligible) by_query[img.query_id].push_back(img.image_id);
        std::set<std::string> valid;
        for (auto& [query, ids] : by_query) {
            std::sort(ids.begin(), ids.end());
            const auto pairs = detection::ascending_pairs(ids);
            const auto found = detection::discover_single_face_images(backend->comparator(), pairs, s->retry.max_retries);
            valid.insert(found.valid.begin(), found.valid.end());
        }
        const auto before = eligible.size();
        std::erase_if(eligible, [&](const auto& e) { return !valid.contains(e.first.image_id); });
        excluded += before - eligible.size();
        spdlog::info("detect: {} kept {} single-face images by pairwise discovery", s->id, valid.size());
    }

    FaceTable faces;
    for (const auto& [img, face] : eligible) faces.push_back({face, img.query_id, group_of.at(img.query_id), img.image_id});
    detection::write_detections(ctx.out / "detections.csv", all_boxes);
    detection::write_groups(ctx.out / "groups.csv", all_groups);
    write_faces(ctx.out / "faces.csv", faces);
    spdlog::info("detect: {} faces, {} images excluded", faces.size(), excluded);
    return {"detections.csv", "groups.csv", "faces.csv"};
}

std::vector<std::string> stage_score(const Context& ctx) {
    const auto& c = ctx.config;
    const auto faces = read_faces(ctx.out / "faces.csv");
    const auto plan = scoring::build_pair_plan(faces, c.seed);
    scoring::ScoreStore store(ctx.out / "scores.jsonl");

    json modes = json::object();
    std::ofstream out(ctx.out / "scores.csv", std::ios::binary);
    csv::Writer w(out);
    w.row(kScoresHeader);
    for (const auto& s : c.services) {
        auto backend = make_backend(ctx, s);
        scoring::CollectOptions opts;
        opts.parallelism = c.workers;
        opts.retry = s.retry;
        opts.failure_ceiling = c.failure_ceiling;
        opts.rate_limit = s.rate_limit;
        scoring::CollectStats stats;
        const auto table = scoring::collect_scores(plan, faces, *backend, store, opts, &stats);
        spdlog::info("score: {} {} pairs, {} calls, {} cache hits, {} retries, {} failed", s.id, table.records.size(),
                     stats.backend_calls, stats.cache_hits, stats.retries, stats.failures);
        for (const auto& r : table.records)
            w.row({s.id, faces[r.pair.first].face_id, faces[r.pair.second].face_id,
                   r.kind == PairKind::SameQuery ? "same" : "cross", scoring::to_string(r.disposition),
                   r.disposition == scoring::Disposition::Ok ? csv::format_double(r.raw) : ""});

        scoring::ModePair m;
        std::string source = "config";
        if (s.modes) {
            m = *s.modes;
        } else {
            try {
                m = scoring::fit_bimodal_modes(table.raw_scores());
            } catch (const DegenerateFitError& e) {
                throw DegenerateFitError(s.id + ": " + e.what());
            }
            source = "fitted";
        }
        modes[s.id] = {{"m0", m.m0}, {"m1", m.m1}, {"source", source}};
    }
    write_text(ctx.out / "modes.json", modes.dump(2) + "\n");
    return {"scores.csv", "modes.json"};
}

struct EstimateInputs {
    FaceTable faces;
    std::vector<scoring::ScoreTable> raw;
    std::vector<scoring::ScoreTable> normalized;
    std::map<std::string, scoring::ModePair> modes;
    std::vector<estimation::QueryResults> results;
};

EstimateInputs load_estimate_inputs(const Context& ctx) {
    EstimateInputs in;
    in.faces = read_faces(ctx.out / "faces.csv");
    in.raw = read_scores(ctx.out / "scores.csv", in.faces, ctx.config.services);
    in.modes = read_modes(ctx.out / "modes.json");
    in.normalized = normalized_tables(in.raw, in.modes);
    in.results = estimation::spectral_results(in.faces, in.normalized, ctx.config.thresholds, ctx.config.workers);
    return in;
}

void write_zscores(const fs::path& path, const FaceTable& faces, std::span<const estimation::QueryResults> results) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row({"query_id", "service", "face_id", "z", "status"});
    for (const auto& q : results)
        for (const auto& [service, r] : q.services) {
            if (!r) {
                w.row({q.query_id, service, "", "", "excluded"});
            } else if (!r->accepted()) {
                w.row({q.query_id, service, "", "", std::string("rejected:") + estimation::to_string(*r->rejection)});
            } else {
                for (std::size_t k = 0; k < r->faces.size(); ++k)
                    w.row({q.query_id, service, faces[r->faces[k]].face_id, csv::format_double(r->z[k]), "accepted"});
            }
        }
}

std::vector<std::string> stage_estimate(const Context& ctx) {
    const auto& c = ctx.config;
    const auto in = load_estimate_inputs(ctx);
    auto est = estimation::estimate_labels(in.faces.size(), in.results, c.thresholds);

    const auto truth = truth_map(ctx, in.faces);
    const auto merged = merged_annotations(ctx.out);
    if (c.annotation_budget > 0.0) {
        std::map<std::string, Label> source = truth.value_or(std::map<std::string, Label>{});
        for (const auto& [face, label] : merged) source[face] = label;
        const auto queue = estimation::ambiguity_rank(est, in.faces, in.results, c.thresholds.tau);
        est = estimation::apply_annotations(est, in.faces, queue, source, c.annotation_budget);
        spdlog::info("estimate: annotation budget {} covers {} faces", c.annotation_budget,
                     estimation::budget_count(c.annotation_budget, queue.size()));
    } else if (!merged.empty()) {
        const auto overrides = labels_from_map(in.faces, merged);
        for (std::size_t f = 0; f < overrides.size(); ++f)
            if (overrides[f] != Label::Unknown) est.y_hat[f] = overrides[f];
        spdlog::info("estimate: {} merged annotations applied", merged.size());
    }

    const Labels y = truth ? labels_from_map(in.faces, *truth) : Labels(in.faces.size(), Label::Unknown);
    estimation::write_label_dump(ctx.out / "labels.csv", in.faces, y, est);
    write_zscores(ctx.out / "zscores.csv", in.faces, in.results);
    std::size_t included = 0;
    for (const auto& q : est.queries) included += q.disposition == estimation::QueryDisposition::Included;
    spdlog::info("estimate: {} of {} queries included", included, est.queries.size());
    return {"labels.csv", "zscores.csv"};
}

struct LabelInputs {
    Labels y;
    Labels y_hat;
    std::vector<char> precondition;
    bool annotated = false;
};

LabelInputs read_labels(const fs::path& path, const FaceTable& faces) {
    const auto rows = estimation::read_label_dump(path);
    if (rows.size() != faces.size()) throw ValidationError("labels.csv does not match faces.csv");
    LabelInputs out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].face_id != faces[i].face_id) throw ValidationError("labels.csv does not match faces.csv");
        out.y.push_back(rows[i].y);
        out.y_hat.push_back(rows[i].estimated);
        out.precondition.push_back(rows[i].disposition.starts_with("precondition") ? 1 : 0);
        out.annotated |= rows[i].y != Label::Unknown;
    }
    return out;
}

json eer_json(const std::optional<evaluation::EvalCurve>& curve, double confidence) {
    if (!curve) return nullptr;
    const auto e = evaluation::equal_error_rate_with_interval(*curve, confidence);
    return {{"eer", e.eer}, {"lo", e.interval.lo}, {"hi", e.interval.hi}};
}

std::vector<std::string> stage_evaluate(const Context& ctx) {
    const auto& c = ctx.config;
    const auto in = load_estimate_inputs(ctx);
    const auto labels = read_labels(ctx.out / "labels.csv", in.faces);
    std::vector<std::string> artifacts;

    json services = json::array();
    std::vector<evaluation::BiasRow> bias_rows;
    bool bias_started = false;
    for (std::size_t k = 0; k < in.raw.size(); ++k) {
        const auto& table = in.raw[k];
        const auto est = evaluation::try_curve(table, in.faces, labels.y_hat, c.confidence);
        if (!est) throw EvaluationError(table.service + ": empty genuine or impostor set under estimated labels");
        std::optional<evaluation::EvalCurve> ann, ach;
        if (labels.annotated) {
            ann = evaluation::try_curve(table, in.faces, labels.y, c.confidence);
            ach = evaluation::try_curve(table, in.faces, evaluation::achievable_labels(labels.y, labels.y_hat),
                                        c.confidence);
        }
        std::vector<evaluation::CurveRow> rows{{"estimated", table.service, "all", &*est}};
        if (ann) rows.push_back({"annotated", table.service, "all", &*ann});
        if (ach) rows.push_back({"achievable", table.service, "all", &*ach});
        const auto curve_file = "curves_" + table.service + ".csv";
        evaluation::write_curves(ctx.out / curve_file, rows);
        artifacts.push_back(curve_file);

        const auto& modes = in.modes.at(table.service);
        json s = {{"id", table.service},
                  {"modes", {modes.m0, modes.m1}},
                  {"n_genuine", est->n_genuine},
                  {"n_impostor", est->n_impostor},
                  {"eer_estimated", eer_json(est, c.confidence)},
                  {"eer_annotated", eer_json(ann, c.confidence)},
                  {"eer_achievable", eer_json(ach, c.confidence)}};
        json fnmr = json::object();
        for (double fmr : kReportFmrs) {
            json point = {{"estimated", evaluation::fnmr_at_fmr(*est, fmr)}};
            if (ann) point["annotated"] = evaluation::fnmr_at_fmr(*ann, fmr);
            fnmr[csv::format_double(fmr)] = point;
        }
        s["fnmr_at_fmr"] = fnmr;
        if (ann && ach)
            s["discrepancy"] = {{"total", evaluation::curve_discrepancy(*est, *ann)},
                                {"type_a", evaluation::curve_discrepancy(*ach, *ann)},
                                {"type_b", evaluation::curve_discrepancy(*est, *ach)}};
        else
            s["discrepancy"] = nullptr;
        services.push_back(s);

        const auto bias = evaluation::disaggregate_bias(table, in.faces, labels.y, labels.y_hat, c.confidence);
        evaluation::write_bias(ctx.out / "bias.csv", table.service, bias, bias_started);
        bias_started = true;
        for (auto r : bias) {
            r.group = table.service + "/" + r.group;
            bias_rows.push_back(std::move(r));
        }
    }
    artifacts.push_back("bias.csv");

    json bias = json::array();
    for (const auto& r : bias_rows) {
        const auto slash = r.group.find('/');
        json row = {{"service", r.group.substr(0, slash)},
                    {"group", r.group.substr(slash + 1)},
                    {"n_genuine", r.n_genuine},
                    {"n_impostor", r.n_impostor}};
        row["estimated"] = r.estimated ? json{{"eer", r.estimated->eer},
                                              {"lo", r.estimated->interval.lo},
                                              {"hi", r.estimated->interval.hi}}
                                       : json(nullptr);
        row["annotated"] = r.annotated ? json{{"eer", r.annotated->eer},
                                              {"lo", r.annotated->interval.lo},
                                              {"hi", r.annotated->interval.hi}}
                                       : json(nullptr);
        bias.push_back(row);
    }

    json ablation = json::array();
    json composition = json::array();
    if (labels.annotated) {
        std::map<std::string, Labels> per_service;
        for (const auto& t : in.raw) {
            const std::set<std::string> one{t.service};
            per_service[t.service] = estimation::estimate_labels(in.faces.size(), in.results, c.thresholds, &one).y_hat;
        }
        const auto rows = evaluation::majority_vote_ablation(in.raw, in.faces, labels.y, per_service, labels.y_hat);
        std::ofstream out(ctx.out / "ablation.csv", std::ios::binary);
        csv::Writer w(out);
        w.row({"service", "no_mv", "mv"});
        for (const auto& r : rows) {
            w.row({r.service, csv::format_double(r.no_mv), csv::format_double(r.mv)});
            ablation.push_back({{"service", r.service}, {"no_mv", number_or_null(r.no_mv)}, {"mv", number_or_null(r.mv)}});
        }
        artifacts.push_back("ablation.csv");

        if (in.raw.size() >= 3) {
            const auto sweep = evaluation::service_composition_sweep(in.raw, in.faces, labels.y, in.results,
                                                                     c.thresholds, kReportFmrs);
            std::ofstream cout_(ctx.out / "composition.csv", std::ios::binary);
            csv::Writer cw(cout_);
            cw.row({"subset", "service", "fmr", "delta_fnmr"});
            for (const auto& r : sweep) {
                std::string subset;
                for (const auto& s : r.subset) subset += (subset.empty() ? "" : "+") + s;
                cw.row({subset, r.service, csv::format_double(r.fmr), csv::format_double(r.delta_fnmr)});
                composition.push_back({{"subset", r.subset},
                                       {"service", r.service},
                                       {"fmr", r.fmr},
                                       {"delta_fnmr", number_or_null(r.delta_fnmr)}});
            }
            artifacts.push_back("composition.csv");
        }
    }

    json doc = {{"services", services}, {"bias", bias}, {"ablation", ablation}, {"composition", composition}};
    write_text(ctx.out / "evaluation.json", doc.dump(2) + "\n");
    artifacts.push_back("evaluation.json");
    return artifacts;
}

std::vector<std::string> stage_report(const Context& ctx) {
    const auto rows = estimation::read_label_dump(ctx.out / "labels.csv");
    const auto cm = evaluation::confusion_matrix(rows);
    bool annotated = false;
    std::map<std::string, std::size_t> dispositions;
    std::set<std::string> queries;
    for (const auto& r : rows) {
        annotated |= r.y != Label::Unknown;
        ++dispositions[r.disposition];
        queries.insert(r.query_id);
    }
    json confusion = json::array();
    for (const auto& row : cm.counts) confusion.push_back(row);
    json agreement = nullptr;
    if (annotated) {
        try {
            agreement = evaluation::agreement_rate(cm);
        } catch (const ValidationError&) {
            agreement = nullptr;
        }
    }
    const json evaluation = json::parse(read_text(ctx.out / "evaluation.json"));
    json doc = {{"config_hash", ctx.config.hash()},
                {"seed", ctx.config.seed},
                {"queries", queries.size()},
                {"faces", rows.size()},
                {"face_dispositions", dispositions},
                {"confusion", {{"labels", {1, 0, -1}}, {"counts", confusion}, {"n_excluded", cm.n_excluded}}},
                {"agreement", agreement},
                {"services", evaluation.at("services")},
                {"bias", evaluation.at("bias")},
                {"ablation", evaluation.at("ablation")},
                {"composition", evaluation.at("composition")}};
    write_text(ctx.out / "report.json", doc.dump(2) + "\n");
    return {"report.json"};
}

using StageFn = std::vector<std::string> (*)(const Context&);

StageFn stage_fn(Stage s) {
    switch (s) {
        case Stage::Source: return stage_source;
        case Stage::Detect: return stage_detect;
        case Stage::Score: return stage_score;
        case Stage::Estimate: return stage_estimate;
        case Stage::Evaluate: return stage_evaluate;
        case Stage::Report: return stage_report;
    }
    return nullptr;
}

json services_json(const RunConfig& c) {
    json out = json::array();
    for (const auto& s : c.services) {
        json j = {{"id", s.id},
                  {"backend", s.backend},
                  {"rate_limit", s.rate_limit},
                  {"max_retries", s.retry.max_retries},
                  {"backoff_ms", s.retry.backoff_base.count()},
                  {"detector", s.detector}};
        j["range"] = s.range ? range_json(*s.range) : json(nullptr);
        j["modes"] = s.modes ? json::array({s.modes->m0, s.modes->m1}) : json(nullptr);
        out.push_back(j);
    }
    return out;
}

json models_json(const RunConfig& c) {
    json out = json::object();
    for (const auto& [name, m] : c.models) out[name] = json::parse(simulator::service_model_to_json(m));
    return out;
}

json world_json(const RunConfig& c) {
    return c.world ? json::parse(simulator::world_config_to_json(*c.world)) : json(nullptr);
}

/// Result-relevant configuration of each stage, hashed in chain.
std::string stage_part(const RunConfig& c, Stage s, const fs::path& out) {
    json j;
    switch (s) {
        case Stage::Source:
            j = {{"names", file_hash(c.names)},
                 {"schema", file_hash(c.schema)},
                 {"provider", file_hash(c.provider_manifest)},
                 {"world", world_json(c)},
                 {"reference_date", corpus::format_iso_date(c.fetch.reference_date)},
                 {"window_months", c.fetch.window_months},
                 {"keep_undated", c.fetch.keep_undated},
                 {"max_results", c.fetch.max_results},
                 {"dedup", c.dedup_threshold}};
            break;
        case Stage::Detect:
            j = {{"iou", c.iou_threshold}, {"detections", file_hash(c.detections)}, {"services", services_json(c)},
                 {"models", models_json(c)}};
            break;
        case Stage::Score:
            j = {{"seed", c.seed}, {"services", services_json(c)}, {"models", models_json(c)},
                 {"failure_ceiling", c.failure_ceiling}};
            break;
        case Stage::Estimate: {
            const auto merged = merged_annotations_path(out);
            j = {{"eigen_threshold", c.thresholds.eigen_threshold},
                 {"tau", c.thresholds.tau},
                 {"min_prevalent", c.thresholds.min_prevalent},
                 {"min_crawled", c.thresholds.min_crawled},
                 {"budget", c.annotation_budget},
                 {"annotations", file_hash(c.annotations)},
                 {"merged", fs::exists(merged) ? sha256_hex(read_text(merged)) : ""}};
            break;
        }
        case Stage::Evaluate: j = {{"confidence", c.confidence}}; break;
        case Stage::Report: j = json::object(); break;
    }
    return j.dump();
}

bool artifacts_present(const fs::path& out, const StageRecord& r) {
    if (r.artifacts.empty()) return false;
    return std::all_of(r.artifacts.begin(), r.artifacts.end(), [&](const auto& a) { return fs::exists(out / a); });
}

}  // namespace

// --- RunConfig ---

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
    RunConfig c;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ValidationError("run config must be a JSON object");
        c.names = read_path(j, "names", base_dir);
        c.schema = read_path(j, "schema", base_dir);
        c.provider_manifest = read_path(j, "provider", base_dir);
        c.detections = read_path(j, "detections", base_dir);
        c.annotations = read_path(j, "annotations", base_dir);
        if (j.contains("output")) {
            fs::path p = j.at("output").get<std::string>();
            c.output = p.is_absolute() ? p : base_dir / p;
        } else {
            c.output = base_dir / "run";
        }

        if (j.contains("simulator")) {
            const auto& sim = j.at("simulator");
            if (sim.contains("world")) c.world = simulator::world_config_from_json(sim.at("world").dump());
            if (sim.contains("models"))
                for (const auto& [name, m] : sim.at("models").items()) {
                    json mj = m;
                    if (!mj.contains("id")) mj["id"] = name;
                    c.models[name] = simulator::service_model_from_json(mj.dump());
                }
        }

        if (j.contains("services")) {
            for (const auto& sj : j.at("services")) {
                ServiceConfig s;
                s.id = sj.at("id").get<std::string>();
                s.backend = sj.value("backend", "simulator:" + s.id);
                if (sj.contains("range") && !sj.at("range").is_null()) s.range = read_range(sj.at("range"));
                read_if(sj, "rate_limit", s.rate_limit);
                if (sj.contains("retry")) {
                    const auto& r = sj.at("retry");
                    read_if(r, "max_retries", s.retry.max_retries);
                    if (r.contains("backoff_ms")) s.retry.backoff_base = std::chrono::milliseconds(r.at("backoff_ms").get<long>());
                }
                if (sj.contains("modes") && !sj.at("modes").is_null()) {
                    const auto m = sj.at("modes").get<std::vector<double>>();
                    if (m.size() != 2) throw ValidationError(s.id + ": modes must be [m0, m1]");
                    s.modes = scoring::ModePair{m[0], m[1]};
                }
                if (sj.contains("detector")) {
                    s.detector = sj.at("detector").get<bool>();
                } else if (s.backend.starts_with("simulator:")) {
                    auto it = c.models.find(s.backend.substr(10));
                    if (it != c.models.end()) s.detector = it->second.detector;
                }
                c.services.push_back(std::move(s));
            }
        } else {
            for (const auto& [name, m] : c.models) {
                ServiceConfig s;
                s.id = name;
                s.backend = "simulator:" + name;
                s.detector = m.detector;
                c.services.push_back(std::move(s));
            }
        }

        if (j.contains("thresholds")) {
            const auto& t = j.at("thresholds");
            read_if(t, "eigen_threshold", c.thresholds.eigen_threshold);
            read_if(t, "tau", c.thresholds.tau);
            read_if(t, "min_prevalent", c.thresholds.min_prevalent);
            read_if(t, "min_crawled", c.thresholds.min_crawled);
            read_if(t, "iou", c.iou_threshold);
            read_if(t, "dedup", c.dedup_threshold);
        }
        if (j.contains("fetch")) {
            const auto& f = j.at("fetch");
            if (f.contains("reference_date"))
                c.fetch.reference_date = corpus::parse_iso_date(f.at("reference_date").get<std::string>());
            read_if(f, "window_months", c.fetch.window_months);
            read_if(f, "keep_undated", c.fetch.keep_undated);
            read_if(f, "max_results", c.fetch.max_results);
            read_if(f, "max_retries", c.fetch.max_retries);
        }
        read_if(j, "seed", c.seed);
        read_if(j, "annotation_budget", c.annotation_budget);
        read_if(j, "workers", c.workers);
        read_if(j, "failure_ceiling", c.failure_ceiling);
        read_if(j, "confidence", c.confidence);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("run config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    return from_json(read_text(path), base);
}

std::string RunConfig::canonical_json() const {
    json j;
    for (auto s : kAllStages) j[to_string(s)] = json::parse(stage_part(*this, s, output));
    j[to_string(Stage::Estimate)].erase("merged");
    return j.dump();
}

std::string RunConfig::hash() const { return sha256_hex(canonical_json()); }

void RunConfig::validate() const {
    thresholds.validate();
    if (services.empty()) throw ValidationError("run config names no services");
    std::set<std::string> ids;
    for (const auto& s : services) {
        if (s.id.empty()) throw ValidationError("service without id");
        if (s.id.find_first_of("/\\,") != std::string::npos) throw ValidationError("service id '" + s.id + "' has reserved characters");
        if (!ids.insert(s.id).second) throw ValidationError("duplicate service id '" + s.id + "'");
        if (s.backend.starts_with("simulator:")) {
            if (!world) throw ValidationError(s.id + ": simulator backend needs simulator.world");
            model_for(*this, s);
        } else if (s.backend == "replay") {
            if (!s.range) throw ValidationError(s.id + ": replay backend needs a native range");
            if (!s.detector) throw ValidationError(s.id + ": replay backend cannot discover single-face images");
        } else {
            throw ValidationError(s.id + ": unknown backend '" + s.backend + "'");
        }
        if (s.range && !(s.range->lo < s.range->hi)) throw ValidationError(s.id + ": range must satisfy lo < hi");
        if (s.modes && !(s.modes->m0 < s.modes->m1)) throw ValidationError(s.id + ": modes must satisfy m0 < m1");
        if (s.retry.max_retries < 0) throw ValidationError(s.id + ": max_retries must be >= 0");
        if (s.rate_limit < 0) throw ValidationError(s.id + ": rate_limit must be >= 0");
    }
    if (!names && !world) throw ValidationError("run config needs a name list or a simulator world");
    if (names && !provider_manifest) throw ValidationError("a name list needs a provider manifest");
    if (!names && provider_manifest) throw ValidationError("a provider manifest needs a name list");
    for (const auto* p : {&names, &schema, &provider_manifest, &detections, &annotations})
        if (*p && !fs::exists(**p)) throw ValidationError("file not found: " + (*p)->string());
    if (!(iou_threshold >= 0.0 && iou_threshold < 1.0)) throw ValidationError("iou threshold must be in [0,1)");
    if (!(dedup_threshold > 0.0 && dedup_threshold <= 1.0)) throw ValidationError("dedup threshold must be in (0,1]");
    if (!(annotation_budget >= 0.0 && annotation_budget <= 1.0)) throw ValidationError("annotation_budget must be in [0,1]");
    if (workers == 0) throw ValidationError("workers must be >= 1");
    if (!(failure_ceiling >= 0.0 && failure_ceiling <= 1.0)) throw ValidationError("failure_ceiling must be in [0,1]");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must be in (0,1)");
    if (fetch.window_months < 0) throw ValidationError("window_months must be >= 0");
}

// --- stages ---

const char* to_string(Stage s) noexcept {
    switch (s) {
        case Stage::Source: return "source";
        case Stage::Detect: return "detect";
        case Stage::Score: return "score";
        case Stage::Estimate: return "estimate";
        case Stage::Evaluate: return "evaluate";
        case Stage::Report: return "report";
    }
    return "?";
}

Stage stage_from_string(std::string_view name) {
    for (auto s : kAllStages)
        if (name == to_string(s)) return s;
    throw ValidationError("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> parse_stages(std::string_view list) {
    if (list.empty() || list == "all") return {std::begin(kAllStages), std::end(kAllStages)};
    std::set<Stage> picked;
    std::size_t start = 0;
    for (;;) {
        const auto comma = list.find(',', start);
        auto token = list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
        while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
        picked.insert(stage_from_string(token));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return {picked.begin(), picked.end()};
}

const char* to_string(StageStatus s) noexcept {
    switch (s) {
        case StageStatus::Pending: return "pending";
        case StageStatus::Complete: return "complete";
        case StageStatus::Failed: return "failed";
        case StageStatus::Skipped: return "skipped";
    }
    return "?";
}

// --- manifest ---

bool RunManifest::ok() const {
    return std::none_of(stages.begin(), stages.end(), [](const auto& r) { return r.status == StageStatus::Failed; });
}

const StageRecord& RunManifest::at(Stage s) const {
    for (const auto& r : stages)
        if (r.stage == s) return r;
    throw ValidationError(std::string("manifest has no stage ") + to_string(s));
}

StageRecord& RunManifest::at(Stage s) { return const_cast<StageRecord&>(std::as_const(*this).at(s)); }

std::string RunManifest::to_json() const {
    json st = json::array();
    for (const auto& r : stages)
        st.push_back({{"stage", to_string(r.stage)},
                      {"hash", r.hash},
                      {"status", to_string(r.status)},
                      {"executed", r.executed},
                      {"artifacts", r.artifacts},
                      {"error", r.error},
                      {"started", r.started},
                      {"finished", r.finished}});
    return json{{"config_hash", config_hash}, {"stages", st}}.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
    RunManifest m;
    try {
        const json j = json::parse(text);
        m.config_hash = j.value("config_hash", "");
        for (const auto& r : j.at("stages")) {
            StageRecord rec;
            rec.stage = stage_from_string(r.at("stage").get<std::string>());
            rec.hash = r.value("hash", "");
            const auto status = r.value("status", "pending");
            for (auto s : {StageStatus::Pending, StageStatus::Complete, StageStatus::Failed, StageStatus::Skipped})
                if (status == to_string(s)) rec.status = s;
            rec.executed = r.value("executed", false);
            rec.artifacts = r.value("artifacts", std::vector<std::string>{});
            rec.error = r.value("error", "");
            rec.started = r.value("started", "");
            rec.finished = r.value("finished", "");
            m.stages.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    return m;
}

RunManifest load_manifest(const fs::path& output) {
    RunManifest m;
    const auto path = output / "manifest.json";
    if (fs::exists(path)) m = RunManifest::from_json(read_text(path));
    for (auto s : kAllStages) {
        const bool present = std::any_of(m.stages.begin(), m.stages.end(), [&](const auto& r) { return r.stage == s; });
        if (!present) {
            StageRecord r;
            r.stage = s;
            m.stages.push_back(std::move(r));
        }
    }
    std::sort(m.stages.begin(), m.stages.end(), [](const auto& a, const auto& b) { return a.stage < b.stage; });
    return m;
}

RunManifest run(const RunConfig& config, std::span<const Stage> stages) {
    config.validate();
    fs::create_directories(config.output);
    RunManifest manifest = load_manifest(config.output);
    manifest.config_hash = config.hash();

    Context ctx{config, config.output, nullptr};
    if (config.world) ctx.world = std::make_shared<const simulator::World>(simulator::generate_world(*config.world));

    const std::set<Stage> requested(stages.begin(), stages.end());
    if (requested.empty()) return manifest;
    const Stage last = *requested.rbegin();

    auto save = [&] { write_text(config.output / "manifest.json", manifest.to_json()); };
    std::string upstream;
    bool failed = false;
    for (auto s : kAllStages) {
        if (s > last) break;
        auto& rec = manifest.at(s);
        const std::string part = stage_part(config, s, config.output);
        const std::string hash = sha256_hex(std::string(to_string(s)) + "\n" + part + "\n" + upstream);
        upstream = hash;
        if (failed) {
            rec.hash = hash;
            rec.status = StageStatus::Skipped;
            rec.executed = false;
            continue;
        }
        const bool current = rec.status == StageStatus::Complete && rec.hash == hash && artifacts_present(config.output, rec);
        if (current) {
            rec.executed = false;
            if (requested.contains(s)) spdlog::info("{}: up to date", to_string(s));
            continue;
        }
        if (!requested.contains(s)) spdlog::info("{}: stale, re-running for downstream stages", to_string(s));
        rec = StageRecord{};
        rec.stage = s;
        rec.hash = hash;
        rec.started = now_utc();
        rec.executed = true;
        try {
            rec.artifacts = stage_fn(s)(ctx);
            rec.status = StageStatus::Complete;
        } catch (const std::exception& e) {
            rec.status = StageStatus::Failed;
            rec.error = e.what();
            failed = true;
            spdlog::error("{} failed: {}", to_string(s), e.what());
        }
        rec.finished = now_utc();
        save();
    }
    save();
    return manifest;
}

// --- comparison ---

std::string DriftReport::to_json() const {
    return json{{"service", service},
                {"eer_a", eer_a},
                {"eer_b", eer_b},
                {"interval_a", {lo_a, hi_a}},
                {"interval_b", {lo_b, hi_b}},
                {"delta", delta},
                {"probable_model_change", probable_model_change}}
               .dump(2);
}

DriftReport compare_runs(const fs::path& run_a, const fs::path& run_b, const std::string& service) {
    auto find = [&](const fs::path& dir) {
        const auto path = dir / "report.json";
        if (!fs::exists(path)) throw ValidationError("no report in " + dir.string());
        const json j = json::parse(read_text(path));
        for (const auto& s : j.at("services"))
            if (s.at("id") == service) return s.at("eer_estimated");
        throw ValidationError("service '" + service + "' absent from " + dir.string());
    };
    const json a = find(run_a);
    const json b = find(run_b);
    DriftReport d;
    d.service = service;
    d.eer_a = a.at("eer");
    d.lo_a = a.at("lo");
    d.hi_a = a.at("hi");
    d.eer_b = b.at("eer");
    d.lo_b = b.at("lo");
    d.hi_b = b.at("hi");
    d.delta = d.eer_b - d.eer_a;
    d.probable_model_change = d.hi_a < d.lo_b || d.hi_b < d.lo_a;
    return d;
}

// --- annotation round trip ---

std::size_t export_annotation_queue(const RunConfig& config, std::size_t k, const fs::path& out) {
    const auto manifest = load_manifest(config.output);
    if (manifest.at(Stage::Estimate).status != StageStatus::Complete)
        throw ValidationError("annotation export needs a completed estimate stage");
    Context ctx{config, config.output, nullptr};
    const auto in = load_estimate_inputs(ctx);
    const auto est = estimation::estimate_labels(in.faces.size(), in.results, config.thresholds);
    const auto queue = estimation::ambiguity_rank(est, in.faces, in.results, config.thresholds.tau);
    const auto done = merged_annotations(config.output);

    std::map<std::string, std::string> query_string;
    for (const auto& q : read_queries(config.output / "queries.csv")) query_string[q.query.query_id] = q.query.query_string;

    std::ofstream os(out, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + out.string());
    csv::Writer w(os);
    w.row(kQueueHeader);
    std::size_t written = 0, available = 0;
    for (const auto& e : queue) {
        const auto& f = in.faces[e.face];
        if (done.contains(f.face_id)) continue;
        ++available;
        if (written == k) continue;
        w.row({std::to_string(written + 1), f.face_id, f.query_id, query_string[f.query_id], f.image_id,
               e.kind == estimation::QueueKind::TypeA ? "A" : "B", std::to_string(e.query_size),
               csv::format_double(e.ambiguity), std::to_string(to_int(est.y_hat[e.face]))});
        ++written;
    }
    if (k > available) spdlog::warn("annotation queue holds {} faces, {} requested", available, k);
    return written;
}

std::size_t merge_annotations(const RunConfig& config, const fs::path& in) {
    const auto faces = read_faces(config.output / "faces.csv");
    std::set<std::string> known;
    for (const auto& f : faces) known.insert(f.face_id);
    auto merged = merged_annotations(config.output);
    for (const auto& [face, label] : estimation::read_annotations(in)) {
        if (!known.contains(face)) throw ValidationError("annotation for unknown face '" + face + "'");
        merged[face] = label;
    }
    estimation::write_annotations(merged_annotations_path(config.output), merged);
    return merged.size();
}

// --- simulation setup ---

fs::path write_simulation(const fs::path& dir, const simulator::WorldConfig& world,
                          std::span<const simulator::ServiceModel> models, std::uint64_t seed) {
    fs::create_directories(dir);
    const auto w = simulator::generate_world(world);
    simulator::write_world_dump(dir / "world.csv", w);
    estimation::write_annotations(dir / "truth.csv", w.annotations(w.faces()));

    json m = json::object();
    json services = json::array();
    for (const auto& model : models) {
        model.validate();
        m[model.service_id] = json::parse(simulator::service_model_to_json(model));
        services.push_back({{"id", model.service_id}, {"backend", "simulator:" + model.service_id}});
    }
    json config = {{"simulator", {{"world", json::parse(simulator::world_config_to_json(world))}, {"models", m}}},
                   {"services", services},
                   {"seed", seed},
                   {"output", "run"}};
    const auto path = dir / "config.json";
    write_text(path, config.dump(2) + "\n");
    return path;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw ComputationError("SHA-256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace fvbench::pipeline
