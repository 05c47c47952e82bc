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

#include "fvbench/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "fvbench/csv.hpp"
#include "fvbench/errors.hpp"

namespace fvbench::evaluation {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int label_index(Label l) {
    switch (l) {
        case Label::Correct: return 0;
        case Label::Other: return 1;
        case Label::Unknown: return 2;
    }
    return 2;
}

void check_labels(const FaceTable& faces, const Labels& labels) {
    if (labels.size() != faces.size()) throw ValidationError("label vector does not match face table");
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

std::string optional_rate(const std::optional<EerEstimate>& e) { return e ? csv::format_double(e->eer) : ""; }

}  // namespace

ScoreSets build_score_sets(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& labels,
                           const std::optional<std::string>& group) {
    check_labels(faces, labels);
    ScoreSets sets;
    for (const auto& r : table.records) {
        if (r.disposition != scoring::Disposition::Ok) continue;
        const auto i = r.pair.first, j = r.pair.second;
        if (i >= faces.size() || j >= faces.size()) throw ValidationError("score record references unknown face");
        if (labels[i] != Label::Correct || labels[j] != Label::Correct) continue;
        const auto& a = faces[i];
        const auto& b = faces[j];
        if (a.group != b.group) continue;
        if (group && a.group != *group) continue;
        if (a.query_id == b.query_id)
            sets.genuine.push_back(r.raw);
        else
            sets.impostor.push_back(r.raw);
    }
    return sets;
}

EvalSets build_eval_sets(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& annotated,
                         const Labels& estimated) {
    EvalSets s{build_score_sets(table, faces, annotated), build_score_sets(table, faces, estimated)};
    if (s.annotated.genuine.empty() || s.annotated.impostor.empty())
        throw EvaluationError(table.service + ": empty genuine or impostor set under annotated labels");
    if (s.estimated.genuine.empty() || s.estimated.impostor.empty())
        throw EvaluationError(table.service + ": empty genuine or impostor set under estimated labels");
    return s;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile probability must be in (0,1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low || p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(p < p_low ? p : 1.0 - p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        if (p > 1.0 - p_low) x = -x;
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // Halley step on Phi(x) - p.
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

Interval wilson_interval(double k, double n, double confidence) {
    if (!(n > 0.0)) throw ValidationError("wilson interval needs n >= 1");
    if (!(k >= 0.0 && k <= n)) throw ValidationError("wilson interval needs 0 <= k <= n");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must be in (0,1)");
    const double z = normal_quantile(1.0 - 0.5 * (1.0 - confidence));
    const double z2 = z * z;
    const double center = (k + 0.5 * z2) / (n + z2);
    const double half = z * std::sqrt(k * (n - k) / n + 0.25 * z2) / (n + z2);
    Interval out{std::max(0.0, center - half), std::min(1.0, center + half)};
    if (k == 0.0) out.lo = 0.0;
    if (k == n) out.hi = 1.0;
    return out;
}

EvalCurve fmr_fnmr_curve(std::span<const double> genuine, std::span<const double> impostor, double confidence) {
    if (genuine.empty() || impostor.empty()) throw EvaluationError("empty genuine or impostor set");
    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> im(impostor.begin(), impostor.end());
    for (double v : g)
        if (!std::isfinite(v)) throw ValidationError("non-finite score");
    for (double v : im)
        if (!std::isfinite(v)) throw ValidationError("non-finite score");
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());

    EvalCurve c;
    c.n_genuine = g.size();
    c.n_impostor = im.size();
    c.thresholds.reserve(g.size() + im.size() + 2);
    c.thresholds.push_back(-kInf);
    std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(c.thresholds));
    c.thresholds.erase(std::unique(c.thresholds.begin(), c.thresholds.end()), c.thresholds.end());
    c.thresholds.push_back(kInf);

    const double ng = static_cast<double>(g.size());
    const double ni = static_cast<double>(im.size());
    std::size_t gi = 0, ii = 0;  // counts strictly below the threshold
    for (double t : c.thresholds) {
        while (gi < g.size() && g[gi] < t) ++gi;
        while (ii < im.size() && im[ii] < t) ++ii;
        const double false_matches = ni - static_cast<double>(ii);
        const double false_non_matches = static_cast<double>(gi);
        c.fmr.push_back(false_matches / ni);
        c.fnmr.push_back(false_non_matches / ng);
        const auto fi = wilson_interval(false_matches, ni, confidence);
        const auto fn = wilson_interval(false_non_matches, ng, confidence);
        c.fmr_lo.push_back(fi.lo);
        c.fmr_hi.push_back(fi.hi);
        c.fnmr_lo.push_back(fn.lo);
        c.fnmr_hi.push_back(fn.hi);
    }
    return c;
}

EvalCurve fmr_fnmr_curve(const EvalSets& sets, Which which, double confidence) {
    const auto& s = which == Which::Annotated ? sets.annotated : sets.estimated;
    return fmr_fnmr_curve(s.genuine, s.impostor, confidence);
}

double equal_error_rate(const EvalCurve& curve) {
    const std::size_t n = curve.size();
    if (n == 0) throw ValidationError("empty curve");
    for (std::size_t i = 0; i < n; ++i) {
        const double d = curve.fmr[i] - curve.fnmr[i];
        if (d == 0.0) return curve.fmr[i];
        if (i + 1 < n) {
            const double next = curve.fmr[i + 1] - curve.fnmr[i + 1];
            if (d > 0.0 && next < 0.0) {
                const double t = d / (d - next);
                const double fmr = lerp(curve.fmr[i], curve.fmr[i + 1], t);
                const double fnmr = lerp(curve.fnmr[i], curve.fnmr[i + 1], t);
                return 0.5 * (fmr + fnmr);
            }
        }
    }
    throw ValidationError("curve has no FMR/FNMR crossing");
}

EerEstimate equal_error_rate_with_interval(const EvalCurve& curve, double confidence) {
    EerEstimate e;
    e.eer = equal_error_rate(curve);
    const double ni = static_cast<double>(curve.n_impostor);
    const double ng = static_cast<double>(curve.n_genuine);
    const auto a = wilson_interval(std::clamp(e.eer * ni, 0.0, ni), ni, confidence);
    const auto b = wilson_interval(std::clamp(e.eer * ng, 0.0, ng), ng, confidence);
    e.interval = {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
    return e;
}

double fnmr_at_fmr(const EvalCurve& curve, double target_fmr) {
    if (!(target_fmr >= 0.0)) throw ValidationError("target FMR must be >= 0");
    if (curve.size() == 0) throw ValidationError("empty curve");
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve.fmr[i] > target_fmr) continue;
        if (i == 0) return curve.fnmr[0];
        const double span = curve.fmr[i - 1] - curve.fmr[i];
        const double t = span > 0.0 ? (curve.fmr[i - 1] - target_fmr) / span : 1.0;
        return lerp(curve.fnmr[i - 1], curve.fnmr[i], t);
    }
    return curve.fnmr.back();
}

double curve_discrepancy(const EvalCurve& a, const EvalCurve& b) {
    constexpr int kPoints = 401;
    constexpr double lo = -4.0, hi = 0.0;
    const double h = (hi - lo) / (kPoints - 1);
    double area = 0.0;
    double prev = 0.0;
    for (int k = 0; k < kPoints; ++k) {
        const double fmr = std::pow(10.0, lo + h * k);
        const double diff = std::abs(fnmr_at_fmr(a, fmr) - fnmr_at_fmr(b, fmr));
        if (k > 0) area += 0.5 * h * (prev + diff);
        prev = diff;
    }
    return area;
}

std::vector<BiasRow> disaggregate_bias(const scoring::ScoreTable& table, const FaceTable& faces,
                                       const Labels& annotated, const Labels& estimated, double confidence) {
    std::set<std::string> groups;
    for (const auto& f : faces) {
        if (f.group.empty()) throw ValidationError("face '" + f.face_id + "' has no demographic group");
        groups.insert(f.group);
    }
    std::vector<BiasRow> rows;
    for (const auto& g : groups) {
        BiasRow row;
        row.group = g;
        const auto est = build_score_sets(table, faces, estimated, g);
        const auto ann = build_score_sets(table, faces, annotated, g);
        row.n_genuine = est.genuine.size();
        row.n_impostor = est.impostor.size();
        if (!est.genuine.empty() && !est.impostor.empty())
            row.estimated = equal_error_rate_with_interval(fmr_fnmr_curve(est.genuine, est.impostor, confidence),
                                                           confidence);
        if (!ann.genuine.empty() && !ann.impostor.empty())
            row.annotated = equal_error_rate_with_interval(fmr_fnmr_curve(ann.genuine, ann.impostor, confidence),
                                                           confidence);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::size_t& ConfusionMatrix3::at(Label y, Label y_hat) { return counts[label_index(y)][label_index(y_hat)]; }

std::size_t ConfusionMatrix3::at(Label y, Label y_hat) const { return counts[label_index(y)][label_index(y_hat)]; }

std::size_t ConfusionMatrix3::total() const {
    std::size_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

ConfusionMatrix3 confusion_matrix(const Labels& y, const Labels& y_hat, const std::vector<char>& precondition) {
    if (y.size() != y_hat.size() || y.size() != precondition.size())
        throw ValidationError("confusion matrix inputs are not aligned");
    ConfusionMatrix3 cm;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (precondition[i])
            ++cm.n_excluded;
        else
            ++cm.at(y[i], y_hat[i]);
    }
    return cm;
}

ConfusionMatrix3 confusion_matrix(std::span<const estimation::LabelDumpRow> rows) {
    ConfusionMatrix3 cm;
    for (const auto& r : rows) {
        if (r.disposition.starts_with("precondition"))
            ++cm.n_excluded;
        else
            ++cm.at(r.y, r.estimated);
    }
    return cm;
}

double agreement_rate(const ConfusionMatrix3& cm) {
    const std::size_t agree = cm.at(Label::Correct, Label::Correct) + cm.at(Label::Other, Label::Other);
    const std::size_t all = agree + cm.at(Label::Correct, Label::Other) + cm.at(Label::Other, Label::Correct);
    if (all == 0) throw ValidationError("no mutually labelled faces");
    return static_cast<double>(agree) / static_cast<double>(all);
}

Labels achievable_labels(const Labels& y, const Labels& y_hat) {
    if (y.size() != y_hat.size()) throw ValidationError("label vectors are not aligned");
    Labels out(y.size(), Label::Unknown);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y_hat[i] != Label::Unknown) out[i] = y[i];
    return out;
}

EvalCurve achievable_curve(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& y,
                           const Labels& y_hat, double confidence) {
    const auto sets = build_score_sets(table, faces, achievable_labels(y, y_hat));
    if (sets.genuine.empty() || sets.impostor.empty())
        throw EvaluationError(table.service + ": empty genuine or impostor set under achievable labels");
    return fmr_fnmr_curve(sets.genuine, sets.impostor, confidence);
}

std::optional<EvalCurve> try_curve(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& labels,
                                   double confidence) {
    const auto sets = build_score_sets(table, faces, labels);
    if (sets.genuine.empty() || sets.impostor.empty()) return std::nullopt;
    return fmr_fnmr_curve(sets.genuine, sets.impostor, confidence);
}

double discrepancy_to_annotated(const scoring::ScoreTable& table, const FaceTable& faces, const Labels& annotated,
                                const Labels& labels) {
    const auto ann = try_curve(table, faces, annotated);
    const auto est = try_curve(table, faces, labels);
    if (!ann || !est) return std::numeric_limits<double>::quiet_NaN();
    return curve_discrepancy(*est, *ann);
}

std::vector<AblationRow> majority_vote_ablation(std::span<const scoring::ScoreTable> tables, const FaceTable& faces,
                                                const Labels& annotated,
                                                const std::map<std::string, Labels>& per_service_labels,
                                                const Labels& consolidated) {
    std::vector<AblationRow> rows;
    for (const auto& t : tables) {
        auto it = per_service_labels.find(t.service);
        if (it == per_service_labels.end()) throw ValidationError("no single-service labels for " + t.service);
        rows.push_back({t.service, discrepancy_to_annotated(t, faces, annotated, it->second),
                        discrepancy_to_annotated(t, faces, annotated, consolidated)});
    }
    return rows;
}

std::vector<CompositionRow> service_composition_sweep(std::span<const scoring::ScoreTable> tables,
                                                      const FaceTable& faces, const Labels& annotated,
                                                      std::span<const estimation::QueryResults> results,
                                                      const estimation::Thresholds& thresholds,
                                                      std::span<const double> fmr_targets) {
    const std::size_t s = tables.size();
    if (s < 3) throw ValidationError("composition sweep needs at least three services");
    if (s > 20) throw ValidationError("composition sweep supports at most 20 services");

    std::vector<std::size_t> order(s);
    for (std::size_t i = 0; i < s; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return tables[a].service < tables[b].service; });

    std::vector<std::vector<std::size_t>> subsets;
    for (std::uint32_t mask = 1; mask < (1u << s); ++mask) {
        if (std::popcount(mask) < 3) continue;
        std::vector<std::size_t> members;
        for (std::size_t k = 0; k < s; ++k)
            if (mask & (1u << k)) members.push_back(order[k]);
        subsets.push_back(std::move(members));
    }
    auto names = [&](const std::vector<std::size_t>& m) {
        std::vector<std::string> out;
        for (auto i : m) out.push_back(tables[i].service);
        return out;
    };
    std::sort(subsets.begin(), subsets.end(), [&](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return names(a) < names(b);
    });

    std::vector<std::optional<EvalCurve>> annotated_curves;
    for (const auto& t : tables) annotated_curves.push_back(try_curve(t, faces, annotated));

    std::vector<CompositionRow> rows;
    for (const auto& members : subsets) {
        const auto subset_names = names(members);
        const std::set<std::string> keep(subset_names.begin(), subset_names.end());
        const auto labels = estimation::estimate_labels(faces.size(), results, thresholds, &keep).y_hat;
        for (auto i : members) {
            const auto est = try_curve(tables[i], faces, labels);
            for (double fmr : fmr_targets) {
                double delta = std::numeric_limits<double>::quiet_NaN();
                if (est && annotated_curves[i])
                    delta = std::abs(fnmr_at_fmr(*est, fmr) - fnmr_at_fmr(*annotated_curves[i], fmr));
                rows.push_back({subset_names, tables[i].service, fmr, delta});
            }
        }
    }
    return rows;
}

void write_curves(const std::filesystem::path& path, std::span<const CurveRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    w.row({"which", "service", "group", "threshold", "fmr", "fnmr", "fmr_lo", "fmr_hi", "fnmr_lo", "fnmr_hi"});
    for (const auto& r : rows) {
        if (!r.curve) continue;
        const auto& c = *r.curve;
        for (std::size_t i = 0; i < c.size(); ++i)
            w.row({r.which, r.service, r.group, csv::format_double(c.thresholds[i]), csv::format_double(c.fmr[i]),
                   csv::format_double(c.fnmr[i]), csv::format_double(c.fmr_lo[i]), csv::format_double(c.fmr_hi[i]),
                   csv::format_double(c.fnmr_lo[i]), csv::format_double(c.fnmr_hi[i])});
    }
}

void write_bias(const std::filesystem::path& path, const std::string& service, std::span<const BiasRow> rows,
                bool append) {
    std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    csv::Writer w(out);
    if (!append) w.row({"service", "group", "eer_est", "eer_ann", "n_genuine", "n_impostor"});
    for (const auto& r : rows)
        w.row({service, r.group, optional_rate(r.estimated), optional_rate(r.annotated), std::to_string(r.n_genuine),
               std::to_string(r.n_impostor)});
}

}  // namespace fvbench::evaluation
