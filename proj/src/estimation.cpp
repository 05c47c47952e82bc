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

#include "fvbench/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"
#include "parallel.hpp"

namespace fvbench::estimation {

namespace {

const std::vector<std::string> kLabelDumpHeader = {"query_id", "face_id", "y", "estimated_y", "vote_margin",
                                                   "disposition"};
const std::vector<std::string> kAnnotationHeader = {"face_id", "y"};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Label parse_label(const std::string& text, std::size_t line) {
    try {
        return label_from_int(static_cast<int>(csv::parse_int(text, line)));
    } catch (const ParseError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), line);
    }
}

std::string face_disposition(const QueryEstimate& q, std::size_t k) {
    if (q.precondition[k]) {
        return q.disposition == QueryDisposition::TooFewCrawled ? "precondition:too_few_crawled"
                                                                : "precondition:missing_service_estimate";
    }
    if (q.disposition == QueryDisposition::Included) return "included";
    return std::string("excluded:") + to_string(q.disposition);
}

}  // namespace

void Thresholds::validate() const {
    if (!(eigen_threshold > 1.0)) throw ValidationError("eigenvalue threshold T must be > 1");
    if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must be in (0,1)");
    if (min_prevalent < 2) throw ValidationError("min_prevalent must be >= 2");
    if (min_crawled < min_prevalent) throw ValidationError("min_crawled must be >= min_prevalent");
}

const char* to_string(Rejection r) noexcept {
    switch (r) {
        case Rejection::NoPrevalentIdentity: return "no_prevalent_identity";
        case Rejection::MultipleIdentities: return "multiple_identities";
        case Rejection::NegativeEntries: return "negative_entries";
    }
    return "unknown";
}

const char* to_string(QueryDisposition d) noexcept {
    switch (d) {
        case QueryDisposition::Included: return "included";
        case QueryDisposition::TooFewCrawled: return "too_few_crawled";
        case QueryDisposition::NotSingleIdentity: return "not_single_identity";
        case QueryDisposition::TooFewPrevalent: return "too_few_prevalent";
    }
    return "unknown";
}

std::optional<double> SpectralResult::z_of(FaceIndex face) const {
    auto it = std::find(faces.begin(), faces.end(), face);
    if (it == faces.end() || z.empty()) return std::nullopt;
    return z[static_cast<std::size_t>(it - faces.begin())];
}

SpectralResult spectral_identity(const scoring::ConfidenceMatrix& c, double eigen_threshold,
                                 double negative_tolerance) {
    const auto n = static_cast<Eigen::Index>(c.size());
    if (n < 2) throw ValidationError("spectral_identity needs at least a 2x2 matrix");

    SpectralResult out;
    out.query_id = c.query_id();
    out.service_id = c.service_id();
    out.faces = c.faces();

    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        c.values().data(), n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success)
        throw ComputationError("eigen solver did not converge for " + c.query_id() + " / " + c.service_id());

    // Eigenvalues sit on a discrete lattice for clean block matrices (a block
    // of size k gives exactly k); keep rounding noise from crossing T.
    const double slack = 1e-9 * static_cast<double>(n);
    const auto& values = solver.eigenvalues();  // ascending
    Eigen::Index selected = -1;
    for (Eigen::Index k = 0; k < n; ++k)
        if (values[k] > eigen_threshold + slack) {
            ++out.eigenvalues_above;
            selected = k;
        }
    if (out.eigenvalues_above == 0) {
        out.rejection = Rejection::NoPrevalentIdentity;
        return out;
    }
    if (out.eigenvalues_above > 1) {
        out.rejection = Rejection::MultipleIdentities;
        return out;
    }

    Eigen::VectorXd v = solver.eigenvectors().col(selected);
    if (v.sum() < 0.0) v = -v;
    const double lambda = values[selected];
    const Eigen::VectorXd z = std::sqrt(lambda) * v;
    if (z.minCoeff() < -negative_tolerance) {
        out.rejection = Rejection::NegativeEntries;
        return out;
    }
    out.eigenvalue = lambda;
    out.z.assign(z.data(), z.data() + n);
    return out;
}

QueryEstimate consolidate(const std::string& query_id, std::span<const FaceIndex> crawled_faces,
                          const ServiceResults& results, const Thresholds& thresholds) {
    QueryEstimate q;
    q.query_id = query_id;
    q.faces.assign(crawled_faces.begin(), crawled_faces.end());
    std::sort(q.faces.begin(), q.faces.end());
    const std::size_t n = q.faces.size();
    q.y_hat.assign(n, Label::Unknown);
    q.margin.assign(n, 0);
    q.precondition.assign(n, 0);

    if (n < thresholds.min_crawled) {
        q.disposition = QueryDisposition::TooFewCrawled;
        q.detail = std::to_string(n) + " crawled faces";
        std::fill(q.precondition.begin(), q.precondition.end(), 1);
        return q;
    }
    if (results.empty()) {
        q.disposition = QueryDisposition::NotSingleIdentity;
        q.detail = "no service results";
        return q;
    }
    for (const auto& [service, result] : results) {
        if (!result) {
            q.disposition = QueryDisposition::NotSingleIdentity;
            q.detail = service + ": matrix excluded";
            return q;
        }
        if (!result->accepted()) {
            q.disposition = QueryDisposition::NotSingleIdentity;
            q.detail = service + ": " + to_string(*result->rejection);
            return q;
        }
    }

    const int services = static_cast<int>(results.size());
    std::size_t voted_in = 0;
    for (std::size_t k = 0; k < n; ++k) {
        int above = 0;
        bool estimated_everywhere = true;
        for (const auto& [service, result] : results) {
            const auto z = result->z_of(q.faces[k]);
            if (!z) {
                estimated_everywhere = false;
                break;
            }
            above += *z > thresholds.tau;
        }
        if (!estimated_everywhere) {
            q.precondition[k] = 1;
            continue;
        }
        q.margin[k] = above - (services - above);
        q.y_hat[k] = 2 * above > services ? Label::Correct : Label::Other;
        voted_in += q.y_hat[k] == Label::Correct;
    }

    if (voted_in < thresholds.min_prevalent) {
        q.disposition = QueryDisposition::TooFewPrevalent;
        q.detail = std::to_string(voted_in) + " faces voted in";
        std::fill(q.y_hat.begin(), q.y_hat.end(), Label::Unknown);
    }
    return q;
}

std::size_t LabelEstimate::precondition_count() const {
    return static_cast<std::size_t>(std::count(precondition.begin(), precondition.end(), 1));
}

LabelEstimate merge_estimates(std::size_t face_count, std::vector<QueryEstimate> queries) {
    LabelEstimate e;
    e.y_hat.assign(face_count, Label::Unknown);
    e.margin.assign(face_count, 0);
    e.precondition.assign(face_count, 1);
    for (const auto& q : queries)
        for (std::size_t k = 0; k < q.faces.size(); ++k) {
            const auto f = q.faces[k];
            if (f >= face_count) throw ValidationError("query estimate references face beyond table");
            e.y_hat[f] = q.y_hat[k];
            e.margin[f] = q.margin[k];
            e.precondition[f] = q.precondition[k];
        }
    e.queries = std::move(queries);
    return e;
}

std::vector<QueryResults> spectral_results(const FaceTable& faces, std::span<const scoring::ScoreTable> normalized,
                                           const Thresholds& thresholds, std::size_t parallelism) {
    thresholds.validate();
    std::map<std::string, std::vector<FaceIndex>> by_query;
    for (FaceIndex f = 0; f < faces.size(); ++f) by_query[faces[f].query_id].push_back(f);

    std::vector<QueryResults> out;
    for (auto& [query_id, members] : by_query) out.push_back({query_id, std::move(members), {}});
    const std::size_t min_faces = std::max<std::size_t>(thresholds.min_prevalent, 2);

    detail::parallel_for(out.size(), parallelism, [&](std::size_t i) {
        auto& q = out[i];
        if (q.crawled.size() < thresholds.min_crawled) return;
        for (const auto& table : normalized) {
            auto assembled = scoring::assemble_confidence_matrix(q.query_id, q.crawled, table, min_faces);
            if (!assembled.matrix) {
                q.services.emplace(table.service, std::nullopt);
                continue;
            }
            q.services.emplace(table.service, spectral_identity(*assembled.matrix, thresholds.eigen_threshold));
        }
    });
    return out;
}

LabelEstimate estimate_labels(std::size_t face_count, std::span<const QueryResults> results,
                              const Thresholds& thresholds, const std::set<std::string>* services) {
    std::vector<QueryEstimate> queries;
    queries.reserve(results.size());
    for (const auto& q : results) {
        if (!services) {
            queries.push_back(consolidate(q.query_id, q.crawled, q.services, thresholds));
            continue;
        }
        ServiceResults filtered;
        for (const auto& [service, r] : q.services)
            if (services->contains(service)) filtered.emplace(service, r);
        queries.push_back(consolidate(q.query_id, q.crawled, filtered, thresholds));
    }
    return merge_estimates(face_count, std::move(queries));
}

std::vector<QueueEntry> ambiguity_rank(const LabelEstimate& estimate, const FaceTable& faces,
                                       std::span<const QueryResults> results, double tau) {
    std::unordered_map<std::string, std::size_t> query_size;
    for (const auto& f : faces) ++query_size[f.query_id];

    std::unordered_map<FaceIndex, std::vector<double>> z_values;
    for (const auto& q : results)
        for (const auto& [service, result] : q.services) {
            if (!result || !result->accepted()) continue;
            for (std::size_t k = 0; k < result->faces.size(); ++k) z_values[result->faces[k]].push_back(result->z[k]);
        }

    std::vector<QueueEntry> type_a, type_b;
    for (FaceIndex f = 0; f < faces.size(); ++f) {
        QueueEntry e{f, QueueKind::TypeA, query_size[faces[f].query_id], 0.0};
        if (estimate.y_hat.at(f) == Label::Unknown) {
            type_a.push_back(e);
            continue;
        }
        e.kind = QueueKind::TypeB;
        std::vector<double> distances;
        if (auto it = z_values.find(f); it != z_values.end())
            for (double z : it->second) distances.push_back(std::abs(z - tau));
        e.ambiguity = distances.empty() ? 0.0 : median(std::move(distances));
        type_b.push_back(e);
    }

    std::sort(type_a.begin(), type_a.end(), [&](const QueueEntry& a, const QueueEntry& b) {
        if (a.query_size != b.query_size) return a.query_size > b.query_size;
        return std::tie(faces[a.face].query_id, a.face) < std::tie(faces[b.face].query_id, b.face);
    });
    std::sort(type_b.begin(), type_b.end(), [&](const QueueEntry& a, const QueueEntry& b) {
        if (a.ambiguity != b.ambiguity) return a.ambiguity < b.ambiguity;
        return std::tie(faces[a.face].query_id, a.face) < std::tie(faces[b.face].query_id, b.face);
    });
    type_a.insert(type_a.end(), type_b.begin(), type_b.end());
    return type_a;
}

std::size_t budget_count(double budget, std::size_t queue_length) {
    if (!(budget >= 0.0 && budget <= 1.0)) throw ValidationError("annotation budget must be in [0,1]");
    const double exact = budget * static_cast<double>(queue_length);
    // Absorb rounding in products like 0.1 * 30.
    return std::min(queue_length, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

LabelEstimate apply_annotations(const LabelEstimate& estimate, const FaceTable& faces,
                                std::span<const QueueEntry> queue, const std::map<std::string, Label>& annotations,
                                double budget) {
    std::unordered_map<std::string, FaceIndex> index;
    for (FaceIndex f = 0; f < faces.size(); ++f) index.emplace(faces[f].face_id, f);
    for (const auto& [face_id, label] : annotations)
        if (!index.contains(face_id)) throw ValidationError("annotation for unknown face '" + face_id + "'");

    LabelEstimate out = estimate;
    const std::size_t count = budget_count(budget, queue.size());
    for (std::size_t k = 0; k < count; ++k) {
        const auto& id = faces.at(queue[k].face).face_id;
        auto it = annotations.find(id);
        if (it == annotations.end()) throw ValidationError("no annotation for queued face '" + id + "'");
        out.y_hat[queue[k].face] = it->second;
    }
    return out;
}

void write_label_dump(const std::filesystem::path& path, const FaceTable& faces, const Labels& annotated,
                      const LabelEstimate& estimate) {
    std::vector<std::string> disposition(faces.size(), "precondition:not_estimated");
    for (const auto& q : estimate.queries)
        for (std::size_t k = 0; k < q.faces.size(); ++k) disposition[q.faces[k]] = face_disposition(q, k);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row(kLabelDumpHeader);
    for (FaceIndex f = 0; f < faces.size(); ++f)
        w.row({faces[f].query_id, faces[f].face_id, std::to_string(to_int(annotated.at(f))),
               std::to_string(to_int(estimate.y_hat.at(f))), std::to_string(estimate.margin.at(f)), disposition[f]});
}

std::vector<LabelDumpRow> read_label_dump(const std::filesystem::path& path) {
    std::vector<LabelDumpRow> rows;
    for (const auto& r : csv::read_file(path, kLabelDumpHeader))
        rows.push_back({r.fields[0], r.fields[1], parse_label(r.fields[2], r.line), parse_label(r.fields[3], r.line),
                        static_cast<int>(csv::parse_int(r.fields[4], r.line)), r.fields[5]});
    return rows;
}

std::map<std::string, Label> read_annotations(const std::filesystem::path& path) {
    std::map<std::string, Label> out;
    for (const auto& r : csv::read_file(path, kAnnotationHeader)) {
        if (r.fields[0].empty()) throw ParseError("empty face_id", r.line);
        out[r.fields[0]] = parse_label(r.fields[1], r.line);
    }
    return out;
}

void write_annotations(const std::filesystem::path& path, const std::map<std::string, Label>& annotations) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row(kAnnotationHeader);
    for (const auto& [face, label] : annotations) w.row({face, std::to_string(to_int(label))});
}

}  // namespace fvbench::estimation
