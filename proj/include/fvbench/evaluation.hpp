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

// Error-rate analysis over raw service scores.
//
// Conventions: a pair "matches" at threshold t iff score >= t, so
// FMR(t) = |{c in I : c >= t}| / |I| and FNMR(t) = |{c in G : c < t}| / |G|.

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fvbench/estimation.hpp"
#include "fvbench/scoring.hpp"
#include "fvbench/types.hpp"

namespace fvbench::evaluation {

struct ScoreSets {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

/// G/I from annotated labels and G^/I^ from estimated labels.
struct EvalSets {
    ScoreSets annotated;
    ScoreSets estimated;
};

/// Genuine: same-query pairs with both labels Correct. Impostor: cross-query
/// pairs with both labels Correct and the same demographic group. Pairs that
/// are not Ok, or touch an Unknown label, are skipped. When `group` is set
/// only pairs of that group count.
ScoreSets build_score_sets(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& labels,
                           const std::optional<std::string>& group = std::nullopt);

/// Both label variants; throws EvaluationError if any of the four sets is empty.
EvalSets build_eval_sets(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& annotated,
                         const Labels& estimated);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step).
double normal_quantile(double p);

/// Wilson score interval for k successes in n trials at the given two-sided
/// confidence. k may be fractional. Throws ValidationError if n <= 0 or k is
/// outside [0, n].
Interval wilson_interval(double k, double n, double confidence = 0.95);

struct EvalCurve {
    std::vector<double> thresholds;  // -inf, sorted unique scores, +inf
    std::vector<double> fmr;
    std::vector<double> fnmr;
    std::vector<double> fmr_lo, fmr_hi;
    std::vector<double> fnmr_lo, fnmr_hi;
    std::size_t n_genuine = 0;
    std::size_t n_impostor = 0;

    std::size_t size() const noexcept { return thresholds.size(); }
};

/// Threshold sweep. Throws EvaluationError when either set is empty.
EvalCurve fmr_fnmr_curve(std::span<const double> genuine, std::span<const double> impostor,
                         double confidence = 0.95);

enum class Which { Annotated, Estimated };
EvalCurve fmr_fnmr_curve(const EvalSets& sets, Which which, double confidence = 0.95);

/// Rate where FMR and FNMR cross, interpolated linearly between the two
/// thresholds around the sign change of FMR - FNMR.
double equal_error_rate(const EvalCurve& curve);

struct EerEstimate {
    double eer = 0.0;
    Interval interval;  // union of the Wilson intervals of FMR and FNMR at the crossing
};

EerEstimate equal_error_rate_with_interval(const EvalCurve& curve, double confidence = 0.95);

/// FNMR at a target FMR: first point whose FMR is <= target, interpolated
/// linearly in FMR from the preceding point.
double fnmr_at_fmr(const EvalCurve& curve, double target_fmr);

/// Area between the FNMR-vs-log10(FMR) curves over log10 FMR in [-4, 0]
/// (trapezoidal, 401 grid points).
double curve_discrepancy(const EvalCurve& a, const EvalCurve& b);

// --- bias ---

struct BiasRow {
    std::string group;
    std::optional<EerEstimate> estimated;
    std::optional<EerEstimate> annotated;
    std::size_t n_genuine = 0;   // estimated-label sets
    std::size_t n_impostor = 0;
};

/// One row per demographic group found in `faces`, sorted by group. Groups
/// whose genuine or impostor set is empty keep an empty EER.
std::vector<BiasRow> disaggregate_bias(const scoring::ScoreTable& table, const FaceTable& faces,
                                       const Labels& annotated, const Labels& estimated, double confidence = 0.95);

// --- label agreement ---

/// Counts indexed [y][y_hat] with index 0 -> label 1, 1 -> label 0, 2 -> label -1.
struct ConfusionMatrix3 {
    std::array<std::array<std::size_t, 3>, 3> counts{};
    std::size_t n_excluded = 0;

    std::size_t& at(Label y, Label y_hat);
    std::size_t at(Label y, Label y_hat) const;
    std::size_t total() const;
};

/// Faces flagged in `precondition` count only towards n_excluded.
ConfusionMatrix3 confusion_matrix(const Labels& y, const Labels& y_hat, const std::vector<char>& precondition);

/// Rows whose disposition starts with "precondition" count towards n_excluded.
ConfusionMatrix3 confusion_matrix(std::span<const estimation::LabelDumpRow> rows);

/// (n[1,1] + n[0,0]) / sum over the {0,1} x {0,1} cells.
double agreement_rate(const ConfusionMatrix3& cm);

// --- decompositions and ablations ---

/// Annotated labels restricted to faces the estimator kept (y_hat != -1).
Labels achievable_labels(const Labels& y, const Labels& y_hat);

EvalCurve achievable_curve(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& y,
                           const Labels& y_hat, double confidence = 0.95);

/// Curve of `table` under `labels`, or nullopt when a set is empty.
std::optional<EvalCurve> try_curve(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& labels,
                                   double confidence = 0.95);

/// Discrepancy to the annotated curve; NaN when a curve cannot be built.
double discrepancy_to_annotated(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& annotated,
                                const Labels& labels);

struct AblationRow {
    std::string service;
    double no_mv = 0.0;  // labels from this service alone
    double mv = 0.0;     // consolidated labels
};

/// One row per table, in table order.
std::vector<AblationRow> majority_vote_ablation(std::span<const scoring::ScoreTable> tables, const FaceTable& faces,
                                                const Labels& annotated,
                                                const std::map<std::string, Labels>& per_service_labels,
                                                const Labels& consolidated);

struct CompositionRow {
    std::vector<std::string> subset;
    std::string service;
    double fmr = 0.0;
    double delta_fnmr = 0.0;  // |FNMR_estimated - FNMR_annotated|; NaN if a curve is missing
};

/// For every subset of at least three services: labels re-estimated from that
/// subset only, then |FNMR_est - FNMR_ann| at each target FMR for every member.
/// Subsets are ordered by size, then lexicographically.
std::vector<CompositionRow> service_composition_sweep(std::span<const scoring::ScoreTable> tables,
                                                      const FaceTable& faces, const Labels& annotated,
                                                      std::span<const estimation::QueryResults> results,
                                                      const estimation::Thresholds& thresholds,
                                                      std::span<const double> fmr_targets);

// --- file formats ---

struct CurveRow {
    std::string which;
    std::string service;
    std::string group;
    const EvalCurve* curve = nullptr;
};

/// `which,service,group,threshold,fmr,fnmr,fmr_lo,fmr_hi,fnmr_lo,fnmr_hi`
void write_curves(const std::filesystem::path& path, std::span<const CurveRow> rows);

/// `service,group,eer_est,eer_ann,n_genuine,n_impostor`
void write_bias(const std::filesystem::path& path, const std::string& service, std::span<const BiasRow> rows,
                bool append);

}  // namespace fvbench::evaluation
