#pragma once

#include <string>
#include <vector>

#include "modcov/data_model.hpp"
#include "modcov/solvers/problem.hpp"

namespace modcov {

enum class AdaptiveMode { none, pooled, armwise };

/// How a univariate association strength becomes a penalty multiplier.
/// `reciprocal` (default) penalizes strongly associated columns less;
/// `as_written` uses the strength itself as the multiplier.
enum class WeightConvention { reciprocal, as_written };

inline AdaptiveMode parse_adaptive_mode(std::string_view s) {
    if (s == "none") return AdaptiveMode::none;
    if (s == "pooled") return AdaptiveMode::pooled;
    if (s == "armwise") return AdaptiveMode::armwise;
    fail(ErrorKind::invalid_input, "unknown adaptive mode '" + std::string(s) + "'");
}

inline std::string to_string(AdaptiveMode m) {
    switch (m) {
        case AdaptiveMode::none: return "none";
        case AdaptiveMode::pooled: return "pooled";
        case AdaptiveMode::armwise: return "armwise";
    }
    return "?";
}

struct AdaptiveWeights {
    Vector multipliers;
    Vector strengths;
    std::vector<std::string> warnings;
};

inline constexpr double kMultiplierMin = 1e-3;
inline constexpr double kMultiplierMax = 1e3;

inline Vector weights_from_strengths(const Vector& strengths, WeightConvention conv = WeightConvention::reciprocal) {
    Vector mu(strengths.size());
    for (Index j = 0; j < strengths.size(); ++j) {
        const double s = std::abs(strengths[j]);
        double m = conv == WeightConvention::reciprocal ? (s > 0 ? 1.0 / s : kMultiplierMax) : s;
        mu[j] = std::clamp(m, kMultiplierMin, kMultiplierMax);
    }
    return mu;
}

namespace detail {

/// Slope of a family-matched univariate regression of the outcome on one
/// column; nullopt when the fit is degenerate.
inline std::optional<double> univariate_slope(const Dataset& d, const Vector& col, const std::vector<Index>& rows) {
    const Index n = static_cast<Index>(rows.size());
    if (n < 2) return std::nullopt;
    Vector x = take(col, rows);
    const double mx = x.mean();
    const double sxx = (x.array() - mx).square().sum();
    if (!(sxx > 1e-12 * (1.0 + x.squaredNorm()))) return std::nullopt;
    SolverOptions opt;
    opt.max_outer = 100;
    if (d.family == Family::gaussian) {
        Vector y = take(d.y, rows);
        return (x.array() - mx).matrix().dot(y) / sxx;
    }
    Problem pr;
    if (d.family == Family::binomial) {
        pr.kind = LossKind::logistic;
        pr.x.resize(n, 2);
        pr.x.col(0).setOnes();
        pr.x.col(1) = x;
        pr.y = take(d.y, rows);
        bool h0 = false, h1 = false;
        for (Index i = 0; i < n; ++i) (pr.y[i] > 0.5 ? h1 : h0) = true;
        if (!h0 || !h1) return std::nullopt;
    } else {
        pr.kind = LossKind::cox;
        pr.x = x;
        pr.time = take(d.time, rows);
        pr.status = take(d.status, rows);
        if (pr.status.sum() <= 0) return std::nullopt;
    }
    FitResult r = fit(pr, PenaltySpec{}, opt);
    if (!r.converged) return std::nullopt;
    double slope = r.gamma[r.gamma.size() - 1];
    if (!std::isfinite(slope)) return std::nullopt;
    return slope;
}

}  // namespace detail

/// Penalty multipliers from univariate associations between the outcome and
/// each column of W. Column 0 (the intercept) always gets multiplier 1.
inline AdaptiveWeights adaptive_weights(const Dataset& d, const Matrix& w, AdaptiveMode mode,
                                        WeightConvention conv = WeightConvention::reciprocal) {
    const Index p = w.cols();
    AdaptiveWeights out;
    out.multipliers = Vector::Ones(p);
    out.strengths = Vector::Zero(p);
    if (mode == AdaptiveMode::none) return out;
    std::vector<Index> all(static_cast<size_t>(d.n())), pos, neg;
    for (Index i = 0; i < d.n(); ++i) {
        all[static_cast<size_t>(i)] = i;
        (d.treatment[i] > 0 ? pos : neg).push_back(i);
    }
    std::vector<bool> degenerate(static_cast<size_t>(p), false);
    for (Index j = 1; j < p; ++j) {
        Vector col = w.col(j);
        if (mode == AdaptiveMode::pooled) {
            auto s = detail::univariate_slope(d, col, all);
            if (s) out.strengths[j] = std::abs(*s);
            else degenerate[static_cast<size_t>(j)] = true;
        } else {
            auto a = detail::univariate_slope(d, col, pos);
            auto b = detail::univariate_slope(d, col, neg);
            if (a && b) out.strengths[j] = std::abs(*a) + std::abs(*b);
            else degenerate[static_cast<size_t>(j)] = true;
        }
    }
    Vector mu = weights_from_strengths(out.strengths, conv);
    for (Index j = 0; j < p; ++j) {
        if (j == 0) {
            out.multipliers[j] = 1.0;
        } else if (degenerate[static_cast<size_t>(j)]) {
            out.multipliers[j] = 1.0;
            out.warnings.push_back("column " + std::to_string(j) + ": degenerate univariate fit, multiplier set to 1");
        } else {
            out.multipliers[j] = mu[j];
        }
    }
    return out;
}

}  // namespace modcov
