#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "modcov/data_model.hpp"
#include "modcov/solvers/losses.hpp"
#include "modcov/solvers/penalty.hpp"

namespace modcov {

enum class Method { modified_covariate, augmented, full_regression };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::modified_covariate: return "new";
        case Method::augmented: return "new_augmented";
        case Method::full_regression: return "full_regression";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    if (s == "new") return Method::modified_covariate;
    if (s == "augmented" || s == "new_augmented") return Method::augmented;
    if (s == "full" || s == "full_regression") return Method::full_regression;
    fail(ErrorKind::invalid_input, "unknown method '" + std::string(s) + "'");
}

/// A fitted interaction model. `gamma` always acts on W(z): the score of a
/// subject is gamma' W(z), the estimated log-scale contrast between T = +1
/// and T = -1 (for full regression it is twice the interaction block).
struct InteractionModel {
    Family family = Family::gaussian;
    BinaryLink link = BinaryLink::risk_difference;
    Method method = Method::modified_covariate;
    Vector gamma;
    BasisSpec basis;
    double lambda = 0.0;
    Vector multipliers;
    bool exempt_first = false;
    /// Coefficients of the design that was actually fitted (W* for the
    /// modified-covariate methods, [W, W T] or [Z, T, Z T] for full regression).
    Vector raw_coefficients;
    std::vector<std::string> raw_names;

    Index p() const { return gamma.size(); }

    /// How to read the score for this family.
    std::string orientation() const {
        switch (family) {
            case Family::gaussian:
                return "score estimates E(Y|T=+1,z) - E(Y|T=-1,z); larger favors T=+1";
            case Family::binomial:
                return link == BinaryLink::risk_difference
                           ? "score is the log odds ratio T=+1 vs T=-1; larger favors T=+1 (delta_hat = tanh(score/4))"
                           : "score is twice the log relative risk of Y=1 under T=+1 vs T=-1; larger raises Prob(Y=1) under T=+1";
            case Family::cox:
                return "score is the log hazard ratio T=+1 vs T=-1; larger means larger hazard under T=+1 (favors T=-1)";
        }
        return "";
    }
};

inline Vector interaction_score(const InteractionModel& m, const Matrix& z) {
    Matrix w = m.basis.apply(z);
    if (w.cols() != m.gamma.size())
        fail(ErrorKind::incompatible, "model has " + std::to_string(m.gamma.size()) + " coefficients but basis yields " +
                                          std::to_string(w.cols()) + " columns");
    return w * m.gamma;
}

/// (e^{s/2} - 1) / (e^{s/2} + 1) = tanh(s / 4).
inline double risk_difference_of_score(double s) { return std::tanh(s / 4.0); }

inline Vector risk_difference(const InteractionModel& m, const Matrix& z) {
    if (m.family != Family::binomial || m.link != BinaryLink::risk_difference)
        fail(ErrorKind::unsupported, "risk difference needs a binomial risk-difference model");
    Vector s = interaction_score(m, z);
    for (Index i = 0; i < s.size(); ++i) s[i] = risk_difference_of_score(s[i]);
    return s;
}

inline double relative_risk_of_score(double s) { return std::exp(s / 2.0); }

inline Vector relative_risk(const InteractionModel& m, const Matrix& z) {
    if (m.family != Family::binomial || m.link != BinaryLink::relative_risk)
        fail(ErrorKind::unsupported, "relative risk needs a binomial relative-risk model");
    Vector s = interaction_score(m, z);
    for (Index i = 0; i < s.size(); ++i) s[i] = relative_risk_of_score(s[i]);
    return s;
}

/// Hazard-scale score of a survival model: log HR of T=+1 vs T=-1 at z.
inline Vector survival_score_interpretation(const InteractionModel& m, const Matrix& z) {
    if (m.family != Family::cox) fail(ErrorKind::unsupported, "hazard-scale score needs a survival model");
    return interaction_score(m, z);
}

/// Score oriented so that larger always means more benefit from T=+1.
inline Vector benefit_score(const InteractionModel& m, const Matrix& z) {
    Vector s = interaction_score(m, z);
    if (m.family == Family::cox) s = -s;
    return s;
}

// ---------------------------------------------------------------------------
// Stratification

enum class StratifyKind { median, quantiles, cutpoints };

struct StratifyRule {
    StratifyKind kind = StratifyKind::median;
    int groups = 2;                  // quantiles
    std::vector<double> cutpoints;   // fixed cutpoints
    bool allow_degenerate = false;   // median/quantiles on too few distinct scores -> single group

    static StratifyRule median() { return {}; }
    static StratifyRule quantiles(int k) { return {StratifyKind::quantiles, k, {}, false}; }
    static StratifyRule fixed(std::vector<double> c) { return {StratifyKind::cutpoints, 0, std::move(c), false}; }
};

struct StratifiedGroups {
    std::vector<double> cutpoints;
    std::vector<int> labels;  // 0 = lowest group
    std::vector<Index> sizes;

    int group_count() const { return static_cast<int>(sizes.size()); }
};

/// Sample quantile with linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double prob) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Group labels from cutpoints; a score equal to a cutpoint goes to the
/// lower group.
inline StratifiedGroups stratify(const Vector& scores, const StratifyRule& rule) {
    require(scores.size() > 0, "stratify: no scores");
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    const size_t distinct = std::set<double>(sorted.begin(), sorted.end()).size();
    StratifiedGroups g;
    if (rule.kind == StratifyKind::cutpoints) {
        g.cutpoints = rule.cutpoints;
        for (size_t k = 1; k < g.cutpoints.size(); ++k)
            require(g.cutpoints[k] >= g.cutpoints[k - 1], "stratify: cutpoints must be nondecreasing");
    } else {
        const int k = rule.kind == StratifyKind::median ? 2 : rule.groups;
        require(k >= 2, "stratify: need at least 2 groups");
        if (distinct < static_cast<size_t>(k)) {
            if (!rule.allow_degenerate)
                fail(ErrorKind::invalid_input, "stratify: " + std::to_string(k) + " groups requested but only " +
                                                   std::to_string(distinct) + " distinct score value(s)");
        } else {
            for (int c = 1; c < k; ++c) g.cutpoints.push_back(quantile_sorted(sorted, static_cast<double>(c) / k));
        }
    }
    g.sizes.assign(g.cutpoints.size() + 1, 0);
    g.labels.resize(static_cast<size_t>(scores.size()));
    for (Index i = 0; i < scores.size(); ++i) {
        int label = 0;
        for (double c : g.cutpoints) label += scores[i] > c ? 1 : 0;
        g.labels[static_cast<size_t>(i)] = label;
        g.sizes[static_cast<size_t>(label)]++;
    }
    return g;
}

inline std::string group_name(int label, int groups) {
    if (groups == 1) return "all";
    if (groups == 2) return label == 0 ? "low" : "high";
    if (groups == 3) return label == 0 ? "low" : (label == 1 ? "medium" : "high");
    return "g" + std::to_string(label + 1);
}

}  // namespace modcov
