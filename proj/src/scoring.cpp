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

#include "fvbench/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fvbench/errors.hpp"
#include "fvbench/random.hpp"
#include "parallel.hpp"

namespace fvbench::scoring {

namespace {

using json = nlohmann::json;

struct Stratum {
    std::vector<std::string> queries;
    std::vector<FaceIndex> faces;  // ascending
    std::size_t same_pairs = 0;
};

double percentile(const std::vector<double>& sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<PlannedPair> PairPlan::all() const {
    std::vector<PlannedPair> out;
    out.reserve(size());
    std::size_t i = 0, j = 0;
    while (i < same_query.size() || j < cross_query.size()) {
        if (j == cross_query.size() || (i < same_query.size() && same_query[i] < cross_query[j]))
            out.push_back({same_query[i++], PairKind::SameQuery});
        else
            out.push_back({cross_query[j++], PairKind::CrossQuery});
    }
    return out;
}

PairPlan build_pair_plan(const FaceTable& faces, std::uint64_t seed) {
    PairPlan plan;
    plan.seed = seed;

    std::map<std::string, std::vector<FaceIndex>> by_query;
    std::map<std::string, std::string> query_group;
    for (FaceIndex f = 0; f < faces.size(); ++f) {
        const auto& face = faces[f];
        by_query[face.query_id].push_back(f);
        auto [it, inserted] = query_group.emplace(face.query_id, face.group);
        if (!inserted && it->second != face.group)
            throw ValidationError("query '" + face.query_id + "' has faces in two demographic groups");
    }

    std::map<std::string, Stratum> strata;
    for (const auto& [query, members] : by_query) {
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b)
                plan.same_query.push_back(FacePair::canonical(members[a], members[b]));
        auto& s = strata[query_group[query]];
        s.queries.push_back(query);
        s.faces.insert(s.faces.end(), members.begin(), members.end());
        s.same_pairs += members.size() * (members.size() - 1) / 2;
    }
    std::sort(plan.same_query.begin(), plan.same_query.end());

    for (auto& [group, s] : strata) {
        if (s.queries.size() < 2) {
            plan.warnings.push_back("demographic group '" + group + "' has fewer than 2 queries; no cross-query pairs");
            spdlog::warn("{}", plan.warnings.back());
            continue;
        }
        std::sort(s.faces.begin(), s.faces.end());
        std::size_t sum = s.faces.size(), sum_sq = 0;
        for (const auto& q : s.queries) sum_sq += by_query[q].size() * by_query[q].size();
        const std::size_t candidates = (sum * sum - sum_sq) / 2;
        std::size_t needed = std::min(s.same_pairs, candidates);

        // Selection sampling over candidates in ascending pair order.
        Rng rng = make_rng({seed, fnv1a(group)});
        std::size_t remaining = candidates;
        for (std::size_t a = 0; a < s.faces.size() && needed > 0; ++a)
            for (std::size_t b = a + 1; b < s.faces.size() && needed > 0; ++b) {
                const auto fa = s.faces[a], fb = s.faces[b];
                if (faces[fa].query_id == faces[fb].query_id) continue;
                if (uniform_below(rng, remaining) < needed) {
                    plan.cross_query.push_back({fa, fb});
                    --needed;
                }
                --remaining;
            }
    }
    std::sort(plan.cross_query.begin(), plan.cross_query.end());
    return plan;
}

const char* to_string(Disposition d) noexcept {
    switch (d) {
        case Disposition::Ok: return "ok";
        case Disposition::Invalid: return "invalid";
        case Disposition::Failed: return "failed";
    }
    return "failed";
}

Disposition disposition_from_string(const std::string& text) {
    if (text == "ok") return Disposition::Ok;
    if (text == "invalid") return Disposition::Invalid;
    if (text == "failed") return Disposition::Failed;
    throw ValidationError("unknown disposition '" + text + "'");
}

const ScoreRecord* ScoreTable::find(FacePair pair) const {
    auto it = std::lower_bound(records.begin(), records.end(), pair,
                               [](const ScoreRecord& r, const FacePair& p) { return r.pair < p; });
    return it != records.end() && it->pair == pair ? &*it : nullptr;
}

std::vector<double> ScoreTable::raw_scores() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records)
        if (r.disposition == Disposition::Ok) out.push_back(r.raw);
    return out;
}

ScoreStore::ScoreStore(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    if (!in) return;  // a missing cache is an empty cache
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            Entry e{disposition_from_string(j.at("disposition").get<std::string>()), 0.0};
            if (e.disposition == Disposition::Ok) e.raw = j.at("raw").get<double>();
            entries_[key(j.at("service"), j.at("face_i"), j.at("face_j"))] = e;
        } catch (const json::exception& ex) {
            throw ParseError(path_->string() + ": " + ex.what(), line_no);
        }
    }
}

ScoreStore::Key ScoreStore::key(const std::string& service, const std::string& a, const std::string& b) {
    return a < b ? Key{service, a, b} : Key{service, b, a};
}

std::optional<ScoreStore::Entry> ScoreStore::lookup(const std::string& service, const std::string& face_a,
                                                    const std::string& face_b) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key(service, face_a, face_b));
    if (it == entries_.end() || it->second.disposition == Disposition::Failed) return std::nullopt;
    return it->second;
}

void ScoreStore::append(const std::string& service, const FaceTable& faces, std::span<const ScoreRecord> records) {
    std::lock_guard lock(mutex_);
    std::ofstream out;
    if (path_) {
        out.open(*path_, std::ios::app | std::ios::binary);
        if (!out) throw ValidationError("cannot append to score store " + path_->string());
    }
    for (const auto& r : records) {
        const auto& a = faces.at(r.pair.first);
        const auto& b = faces.at(r.pair.second);
        entries_[key(service, a.face_id, b.face_id)] = Entry{r.disposition, r.raw};
        if (!path_) continue;
        json j;
        j["service"] = service;
        j["q_i"] = a.query_id;
        j["face_i"] = a.face_id;
        j["q_j"] = b.query_id;
        j["face_j"] = b.face_id;
        j["raw"] = r.disposition == Disposition::Ok ? json(r.raw) : json(nullptr);
        j["disposition"] = to_string(r.disposition);
        out << j.dump() << '\n';
    }
    if (path_) out.flush();
}

std::size_t ScoreStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

RateLimiter::RateLimiter(double rate_per_second, double burst)
    : rate_(rate_per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
        last_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

ScoreTable collect_scores(const PairPlan& plan, const FaceTable& faces, ServiceBackend& backend, ScoreStore& store,
                          const CollectOptions& options, CollectStats* stats) {
    ScoreTable table;
    table.service = backend.id();
    const auto planned = plan.all();
    table.records.resize(planned.size());

    const ScoreRange range = backend.range();
    std::vector<std::size_t> misses;
    CollectStats local;
    for (std::size_t k = 0; k < planned.size(); ++k) {
        auto& rec = table.records[k];
        rec.pair = planned[k].pair;
        rec.kind = planned[k].kind;
        const auto& a = faces.at(rec.pair.first);
        const auto& b = faces.at(rec.pair.second);
        if (auto hit = store.lookup(table.service, a.face_id, b.face_id)) {
            rec.disposition = hit->disposition;
            rec.raw = hit->raw;
            ++local.cache_hits;
        } else {
            misses.push_back(k);
        }
    }

    RateLimiter limiter(options.rate_limit);
    std::atomic<std::size_t> calls{0}, retries{0};
    detail::parallel_for(misses.size(), options.parallelism, [&](std::size_t m) {
        auto& rec = table.records[misses[m]];
        const auto& a = faces[rec.pair.first];
        const auto& b = faces[rec.pair.second];
        rec.disposition = Disposition::Failed;
        for (int attempt = 0;; ++attempt) {
            limiter.acquire();
            ++calls;
            try {
                const auto result = backend.compare(a, b);
                if (result.is_invalid()) {
                    rec.disposition = Disposition::Invalid;
                } else {
                    if (!range.contains(*result.score))
                        throw ValidationError("service '" + table.service + "' returned " +
                                              std::to_string(*result.score) + " outside its native range");
                    rec.disposition = Disposition::Ok;
                    rec.raw = *result.score;
                }
                return;
            } catch (const TransportError& e) {
                if (attempt >= options.retry.max_retries) {
                    spdlog::warn("{}: pair ({}, {}) failed after {} attempts: {}", table.service, a.face_id,
                                 b.face_id, attempt + 1, e.what());
                    return;
                }
                ++retries;
                if (options.retry.backoff_base.count() > 0)
                    std::this_thread::sleep_for(options.retry.backoff_base * (1LL << std::min(attempt, 20)));
            }
        }
    });

    std::vector<ScoreRecord> fresh;
    fresh.reserve(misses.size());
    for (auto k : misses) fresh.push_back(table.records[k]);
    store.append(table.service, faces, fresh);

    local.backend_calls = calls;
    local.retries = retries;
    local.failures = static_cast<std::size_t>(std::count_if(
        table.records.begin(), table.records.end(), [](const ScoreRecord& r) { return r.disposition == Disposition::Failed; }));
    if (local.retries > 0) spdlog::info("{}: {} retries", table.service, local.retries);
    if (stats) *stats = local;

    if (!planned.empty() &&
        static_cast<double>(local.failures) / static_cast<double>(planned.size()) > options.failure_ceiling)
        throw RunAbortedError("service '" + table.service + "': " + std::to_string(local.failures) + " of " +
                              std::to_string(planned.size()) + " pairs failed");
    return table;
}

ModePair fit_bimodal_modes(std::span<const double> scores) {
    std::vector<double> x(scores.begin(), scores.end());
    std::sort(x.begin(), x.end());
    if (x.size() < 2 || x.front() == x.back())
        throw ValidationError("bimodal fit needs at least two distinct values");
    const double n = static_cast<double>(x.size());

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double var_floor = 1e-6 * var;

    double w[2] = {0.5, 0.5};
    double mu[2] = {percentile(x, 0.10), percentile(x, 0.90)};
    double s2[2] = {var, var};
    if (mu[0] == mu[1]) {
        mu[0] = x.front();
        mu[1] = x.back();
    }

    std::vector<double> resp(x.size());  // responsibility of component 1
    double prev_ll = -INFINITY;
    for (int iter = 0; iter < 200; ++iter) {
        double ll = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double logp[2];
            for (int c = 0; c < 2; ++c) {
                const double d = x[i] - mu[c];
                logp[c] = std::log(w[c]) - 0.5 * std::log(2.0 * std::numbers::pi * s2[c]) - 0.5 * d * d / s2[c];
            }
            const double m = std::max(logp[0], logp[1]);
            const double lse = m + std::log(std::exp(logp[0] - m) + std::exp(logp[1] - m));
            resp[i] = std::exp(logp[1] - lse);
            ll += lse;
        }

        double nk[2] = {0, 0}, sum[2] = {0, 0};
        for (std::size_t i = 0; i < x.size(); ++i) {
            nk[0] += 1.0 - resp[i];
            nk[1] += resp[i];
            sum[0] += (1.0 - resp[i]) * x[i];
            sum[1] += resp[i] * x[i];
        }
        for (int c = 0; c < 2; ++c) {
            w[c] = nk[c] / n;
            if (w[c] < 1e-3)
                throw DegenerateFitError("mixture component weight collapsed; specify modes manually");
            mu[c] = sum[c] / nk[c];
        }
        double sq[2] = {0, 0};
        for (std::size_t i = 0; i < x.size(); ++i) {
            sq[0] += (1.0 - resp[i]) * (x[i] - mu[0]) * (x[i] - mu[0]);
            sq[1] += resp[i] * (x[i] - mu[1]) * (x[i] - mu[1]);
        }
        for (int c = 0; c < 2; ++c) s2[c] = std::max(sq[c] / nk[c], var_floor);

        if (std::abs(ll - prev_ll) < 1e-8) break;
        prev_ll = ll;
    }

    const double ashman_d = std::sqrt(2.0) * std::abs(mu[1] - mu[0]) / std::sqrt(s2[0] + s2[1]);
    if (!(ashman_d > 2.0))
        throw DegenerateFitError("score distribution is not bimodal (Ashman's D = " + std::to_string(ashman_d) +
                                 "); specify modes manually");
    return mu[0] < mu[1] ? ModePair{mu[0], mu[1]} : ModePair{mu[1], mu[0]};
}

double normalize_score(double x, const ModePair& modes) {
    if (!(modes.m0 < modes.m1)) throw ValidationError("modes must satisfy m0 < m1");
    return std::clamp((x - modes.m0) / (modes.m1 - modes.m0), 0.0, 1.0);
}

std::vector<double> normalize_scores(std::span<const double> scores, const ModePair& modes) {
    std::vector<double> out;
    out.reserve(scores.size());
    for (double x : scores) out.push_back(normalize_score(x, modes));
    return out;
}

void normalize_table(ScoreTable& table, const ModePair& modes) {
    for (auto& r : table.records)
        r.normalized = r.disposition == Disposition::Ok ? normalize_score(r.raw, modes) : 0.0;
}

ConfidenceMatrix::ConfidenceMatrix(std::string query_id, std::string service_id, std::vector<FaceIndex> faces)
    : query_id_(std::move(query_id)), service_id_(std::move(service_id)), faces_(std::move(faces)),
      values_(faces_.size() * faces_.size(), 0.0) {
    for (std::size_t i = 0; i < faces_.size(); ++i) values_[i * faces_.size() + i] = 1.0;
}

void ConfidenceMatrix::set(std::size_t i, std::size_t j, double v) {
    if (i == j) throw ValidationError("confidence matrix diagonal is fixed at 1");
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("confidence entries must lie in [0,1]");
    values_[i * faces_.size() + j] = v;
    values_[j * faces_.size() + i] = v;
}

ConfidenceMatrix ConfidenceMatrix::from_dense(std::string query_id, std::string service_id,
                                              std::vector<FaceIndex> faces, std::span<const double> row_major) {
    const std::size_t n = faces.size();
    if (row_major.size() != n * n) throw ValidationError("dense block size does not match face count");
    ConfidenceMatrix m(std::move(query_id), std::move(service_id), std::move(faces));
    for (std::size_t i = 0; i < n; ++i) {
        if (row_major[i * n + i] != 1.0) throw ValidationError("confidence matrix diagonal must be 1");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (row_major[i * n + j] != row_major[j * n + i]) throw ValidationError("confidence matrix must be symmetric");
            m.set(i, j, row_major[i * n + j]);
        }
    }
    return m;
}

AssembledMatrix assemble_confidence_matrix(const std::string& query_id, std::span<const FaceIndex> query_faces,
                                           const ScoreTable& table, std::size_t min_faces) {
    std::vector<FaceIndex> faces(query_faces.begin(), query_faces.end());
    std::sort(faces.begin(), faces.end());
    const std::size_t n = faces.size();

    std::vector<double> value(n * n, 1.0);
    std::vector<char> missing(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto* rec = table.find(FacePair::canonical(faces[i], faces[j]));
            const bool ok = rec && rec->disposition == Disposition::Ok;
            missing[i * n + j] = missing[j * n + i] = !ok;
            if (ok) value[i * n + j] = value[j * n + i] = rec->normalized;
        }

    AssembledMatrix out;
    std::vector<char> alive(n, 1);
    for (;;) {
        std::size_t worst = n, worst_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j) count += alive[j] && missing[i * n + j];
            if (count > worst_count) {
                worst = i;
                worst_count = count;
            }
        }
        if (worst_count == 0) break;
        alive[worst] = 0;
        out.dropped.push_back(faces[worst]);
        spdlog::info("{} / {}: dropped face {} ({} missing pairs)", query_id, table.service, faces[worst], worst_count);
    }

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < n; ++i)
        if (alive[i]) keep.push_back(i);
    if (keep.size() < std::max<std::size_t>(min_faces, 2)) return out;

    std::vector<FaceIndex> kept_faces;
    for (auto i : keep) kept_faces.push_back(faces[i]);
    ConfidenceMatrix m(query_id, table.service, std::move(kept_faces));
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = a + 1; b < keep.size(); ++b) m.set(a, b, value[keep[a] * n + keep[b]]);
    out.matrix = std::move(m);
    return out;
}

}  // namespace fvbench::scoring
