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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fvbench/detection.hpp"
#include "fvbench/types.hpp"

namespace fvbench::scoring {

struct ScoreRange {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
};

/// A 1:1 verification service. compare() returns a raw score within
/// range(), or the "invalid" marker when an image holds several faces.
/// Transport problems are thrown as TransportError. Implementations must be
/// safe to call concurrently.
class ServiceBackend {
public:
    virtual ~ServiceBackend() = default;
    virtual const std::string& id() const = 0;
    virtual ScoreRange range() const = 0;
    virtual detection::CompareOutcome compare(const FaceRecord& a, const FaceRecord& b) = 0;
};

// --- pair planning ---

struct PlannedPair {
    FacePair pair;
    PairKind kind = PairKind::SameQuery;
};

struct PairPlan {
    std::vector<FacePair> same_query;   // sorted
    std::vector<FacePair> cross_query;  // sorted
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    /// Same-query then cross-query pairs, merged into one list sorted by pair.
    std::vector<PlannedPair> all() const;
    std::size_t size() const noexcept { return same_query.size() + cross_query.size(); }
};

/// All within-query pairs, plus the same number of cross-query pairs drawn
/// uniformly without replacement inside each demographic group. Each group
/// contributes as many cross pairs as it has same-query pairs (capped by its
/// candidate count). Groups with fewer than two queries contribute none and
/// produce a warning. Deterministic in `seed`.
PairPlan build_pair_plan(const FaceTable& faces, std::uint64_t seed);

// --- score collection ---

enum class Disposition : std::uint8_t { Ok, Invalid, Failed };

const char* to_string(Disposition d) noexcept;
Disposition disposition_from_string(const std::string& text);

struct ScoreRecord {
    FacePair pair;
    PairKind kind = PairKind::SameQuery;
    Disposition disposition = Disposition::Ok;
    double raw = 0.0;         // meaningful only when disposition == Ok
    double normalized = 0.0;  // filled by normalize_table
};

/// All records of one service, sorted by pair.
struct ScoreTable {
    std::string service;
    std::vector<ScoreRecord> records;

    const ScoreRecord* find(FacePair pair) const;
    std::vector<double> raw_scores() const;  // Ok records only
};

/// Append-only JSON-lines cache of raw results, one record per pair:
/// {"service","q_i","face_i","q_j","face_j","raw","disposition"}.
/// Later lines win over earlier ones for the same key. Failed records are
/// kept in the log but never served as hits, so failures are retried on the
/// next run.
class ScoreStore {
public:
    struct Entry {
        Disposition disposition = Disposition::Ok;
        double raw = 0.0;
    };

    ScoreStore() = default;  // in memory only
    explicit ScoreStore(std::filesystem::path path);

    std::optional<Entry> lookup(const std::string& service, const std::string& face_a,
                                const std::string& face_b) const;

    /// Appends records and flushes. `faces` resolves ids and query ids.
    void append(const std::string& service, const FaceTable& faces, std::span<const ScoreRecord> records);

    std::size_t size() const;

private:
    using Key = std::tuple<std::string, std::string, std::string>;
    static Key key(const std::string& service, const std::string& a, const std::string& b);

    std::optional<std::filesystem::path> path_;
    std::map<Key, Entry> entries_;
    mutable std::mutex mutex_;
};

/// Token bucket limiting calls per second. rate <= 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double rate_per_second, double burst = 1.0);
    void acquire();

private:
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{0};  // doubled after each failed attempt
};

struct CollectOptions {
    std::size_t parallelism = 1;
    RetryPolicy retry;
    double failure_ceiling = 0.05;  // abort when failed / planned exceeds this
    double rate_limit = 0.0;        // calls per second, 0 = unlimited
};

struct CollectStats {
    std::size_t backend_calls = 0;
    std::size_t retries = 0;
    std::size_t failures = 0;
    std::size_t cache_hits = 0;
};

/// Scores every planned pair through the cache, then the backend. Results
/// are merged in plan order whatever the parallelism. Throws RunAbortedError
/// when the failure rate exceeds the ceiling.
ScoreTable collect_scores(const PairPlan& plan, const FaceTable& faces, ServiceBackend& backend, ScoreStore& store,
                          const CollectOptions& options = {}, CollectStats* stats = nullptr);

// --- normalization ---

struct ModePair {
    double m0 = 0.0;
    double m1 = 1.0;
};

/// Means of a two-component 1-D Gaussian mixture fitted by EM, ascending.
/// Starts from the 10th/90th percentiles with equal weights and the sample
/// variance, runs up to 200 iterations, stops when the log-likelihood moves
/// by less than 1e-8. Throws DegenerateFitError when a weight drops below
/// 1e-3 or the two components are not separated (Ashman's D <= 2); the
/// caller then has to provide modes manually.
ModePair fit_bimodal_modes(std::span<const double> scores);

/// clamp((x - m0) / (m1 - m0), 0, 1). Throws ValidationError unless m0 < m1.
double normalize_score(double x, const ModePair& modes);
std::vector<double> normalize_scores(std::span<const double> scores, const ModePair& modes);
void normalize_table(ScoreTable& table, const ModePair& modes);

// --- confidence matrices ---

/// Symmetric matrix of normalized scores over one query's faces for one
/// service, unit diagonal, entries in [0, 1].
class ConfidenceMatrix {
public:
    ConfidenceMatrix(std::string query_id, std::string service_id, std::vector<FaceIndex> faces);

    const std::string& query_id() const noexcept { return query_id_; }
    const std::string& service_id() const noexcept { return service_id_; }
    const std::vector<FaceIndex>& faces() const noexcept { return faces_; }
    std::size_t size() const noexcept { return faces_.size(); }

    double at(std::size_t i, std::size_t j) const { return values_[i * faces_.size() + j]; }
    void set(std::size_t i, std::size_t j, double v);  // writes both (i,j) and (j,i)
    std::span<const double> values() const noexcept { return values_; }

    /// Builds a matrix from a dense row-major block; checks the invariants.
    static ConfidenceMatrix from_dense(std::string query_id, std::string service_id, std::vector<FaceIndex> faces,
                                       std::span<const double> row_major);

private:
    std::string query_id_;
    std::string service_id_;
    std::vector<FaceIndex> faces_;
    std::vector<double> values_;
};

struct AssembledMatrix {
    std::optional<ConfidenceMatrix> matrix;  // empty when excluded
    std::vector<FaceIndex> dropped;          // faces removed for missing pairs
};

/// Assembles C for (query, service) from normalized scores. While any pair
/// is missing (failed, invalid or absent) the face with most missing pairs
/// is dropped, ties to the smallest index. Fewer than `min_faces` survivors
/// means the query is excluded for this service.
AssembledMatrix assemble_confidence_matrix(const std::string& query_id, std::span<const FaceIndex> query_faces,
                                           const ScoreTable& table, std::size_t min_faces);

}  // namespace fvbench::scoring
