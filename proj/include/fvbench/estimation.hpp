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

// Identity label estimation from per-service confidence matrices.
//
// For each (query, service) the leading eigenvector of the confidence matrix
// acts as a block indicator. A query survives only when every service sees
// exactly one large block with non-negative indicator; faces are then voted
// into the correct identity across services.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fvbench/scoring.hpp"
#include "fvbench/types.hpp"

namespace fvbench::estimation {

struct Thresholds {
    double eigen_threshold = 4.0;  // T
    double tau = 0.2;
    std::size_t min_prevalent = 5;
    std::size_t min_crawled = 8;

    void validate() const;  // throws ValidationError
};

/// Entries of an accepted indicator below -kNegativeTolerance reject the query.
inline constexpr double kNegativeTolerance = 0.02;

enum class Rejection { NoPrevalentIdentity, MultipleIdentities, NegativeEntries };

const char* to_string(Rejection r) noexcept;

struct SpectralResult {
    std::string query_id;
    std::string service_id;
    std::vector<FaceIndex> faces;        // matrix order
    std::optional<Rejection> rejection;  // empty when accepted
    std::vector<double> z;               // sqrt(lambda) * v, accepted only
    double eigenvalue = 0.0;             // selected eigenvalue, accepted only
    std::size_t eigenvalues_above = 0;

    bool accepted() const noexcept { return !rejection.has_value(); }
    /// z of `face`, or nullopt when the face is not in this matrix.
    std::optional<double> z_of(FaceIndex face) const;
};

/// Eigendecomposition of C; exactly one eigenvalue above T gives an accepted
/// indicator z = sqrt(lambda) v, oriented to a non-negative sum, so members of
/// a clean block score 1. Throws ComputationError if the solver fails.
SpectralResult spectral_identity(const scoring::ConfidenceMatrix& c, double eigen_threshold = 4.0,
                                 double negative_tolerance = kNegativeTolerance);

enum class QueryDisposition {
    Included,
    TooFewCrawled,      // fewer than min_crawled faces, never scored
    NotSingleIdentity,  // some service rejected or could not build a matrix
    TooFewPrevalent,    // fewer than min_prevalent faces voted in
};

const char* to_string(QueryDisposition d) noexcept;

/// Per service: the spectral result, or nullopt when the matrix could not be
/// assembled for that service.
using ServiceResults = std::map<std::string, std::optional<SpectralResult>>;

struct QueryEstimate {
    std::string query_id;
    std::vector<FaceIndex> faces;  // crawled faces, ascending
    Labels y_hat;
    std::vector<int> margin;             // (#services above tau) - (#services not above)
    std::vector<char> precondition;      // face never estimated (counts as "n excluded")
    QueryDisposition disposition = QueryDisposition::Included;
    std::string detail;
};

/// Applies the exclusion rules and the strict-majority vote for one query.
/// A face missing from any service's matrix is marked precondition-excluded.
QueryEstimate consolidate(const std::string& query_id, std::span<const FaceIndex> crawled_faces,
                          const ServiceResults& results, const Thresholds& thresholds);

/// Labels for a whole face table.
struct LabelEstimate {
    Labels y_hat;
    std::vector<int> margin;
    std::vector<char> precondition;
    std::vector<QueryEstimate> queries;

    std::size_t precondition_count() const;
};

/// Faces not covered by any query estimate are precondition-excluded.
LabelEstimate merge_estimates(std::size_t face_count, std::vector<QueryEstimate> queries);

/// Per query results for every service, as fed to consolidate().
struct QueryResults {
    std::string query_id;
    std::vector<FaceIndex> crawled;
    ServiceResults services;
};

/// Assembles and decomposes the matrix of every (query, service) pair from
/// normalized tables. Matrices keep at least `min_prevalent` faces (and at
/// least two). Output is ordered by query id.
std::vector<QueryResults> spectral_results(const FaceTable& faces, std::span<const scoring::ScoreTable> normalized,
                                           const Thresholds& thresholds, std::size_t parallelism = 1);

/// consolidate() over every query, optionally restricted to some services.
LabelEstimate estimate_labels(std::size_t face_count, std::span<const QueryResults> results,
                              const Thresholds& thresholds, const std::set<std::string>* services = nullptr);

enum class QueueKind { TypeA, TypeB };

struct QueueEntry {
    FaceIndex face = 0;
    QueueKind kind = QueueKind::TypeA;
    std::size_t query_size = 0;
    double ambiguity = 0.0;  // median over services of |z - tau|, Type B only
};

/// Annotation priority: every excluded face (y_hat = -1) first, larger queries
/// first; then included faces by ascending ambiguity. Ties go to query id,
/// then face index.
std::vector<QueueEntry> ambiguity_rank(const LabelEstimate& estimate, const FaceTable& faces,
                                       std::span<const QueryResults> results, double tau);

/// Replaces y_hat by the annotated label for the first ceil(budget * N)
/// queue entries (N = queue length). Throws ValidationError if an annotation
/// names an unknown face or a required entry has no annotation.
LabelEstimate apply_annotations(const LabelEstimate& estimate, const FaceTable& faces,
                                std::span<const QueueEntry> queue, const std::map<std::string, Label>& annotations,
                                double budget);

/// Number of queue entries covered by `budget`.
std::size_t budget_count(double budget, std::size_t queue_length);

// --- file formats ---

/// `query_id,face_id,y,estimated_y,vote_margin,disposition`
void write_label_dump(const std::filesystem::path& path, const FaceTable& faces, const Labels& annotated,
                      const LabelEstimate& estimate);

struct LabelDumpRow {
    std::string query_id;
    std::string face_id;
    Label y = Label::Unknown;
    Label estimated = Label::Unknown;
    int margin = 0;
    std::string disposition;
};

std::vector<LabelDumpRow> read_label_dump(const std::filesystem::path& path);

/// `face_id,y` with y in {-1, 0, 1}.
std::map<std::string, Label> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const std::map<std::string, Label>& annotations);

}  // namespace fvbench::estimation
