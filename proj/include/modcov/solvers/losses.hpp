#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "modcov/common.hpp"

namespace modcov {

// Smooth losses written as functions of the linear predictor eta = X gamma.
// value() returns the unnormalized sum over subjects; derivatives() fills the
// gradient with respect to eta and a positive diagonal curvature. For the
// separable losses the curvature is the exact Hessian diagonal; for Cox it is
// the diagonal of the eta-Hessian, which majorizes the full Hessian.

struct GaussianLoss {
    static constexpr bool quadratic = true;
    const Vector& y;
    const Vector& offset;  // may be empty

    double target(Index i) const { return offset.size() ? y[i] - offset[i] : y[i]; }

    double value(const Vector& eta) const {
        double s = 0.0;
        for (Index i = 0; i < eta.size(); ++i) {
            double r = target(i) - eta[i];
            s += 0.5 * r * r;
        }
        return s;
    }

    void derivatives(const Vector& eta, Vector& d1, Vector& d2) const {
        for (Index i = 0; i < eta.size(); ++i) {
            d1[i] = eta[i] - target(i);
            d2[i] = 1.0;
        }
    }

    /// Squared-error deviance contribution of one subject.
    double deviance(Index i, double eta) const {
        double r = target(i) - eta;
        return r * r;
    }
};

inline double log1pexp(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double expit(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// Negative Bernoulli log-likelihood with logit link, no intercept.
struct LogisticLoss {
    static constexpr bool quadratic = false;
    const Vector& y;

    double value(const Vector& eta) const {
        double s = 0.0;
        for (Index i = 0; i < eta.size(); ++i) s += log1pexp(eta[i]) - y[i] * eta[i];
        return s;
    }

    void derivatives(const Vector& eta, Vector& d1, Vector& d2) const {
        for (Index i = 0; i < eta.size(); ++i) {
            double p = expit(eta[i]);
            d1[i] = p - y[i];
            d2[i] = p * (1.0 - p);
        }
    }

    double deviance(Index i, double eta) const { return 2.0 * (log1pexp(eta) - y[i] * eta); }
};

/// (1 - y) eta + y exp(-eta): the convex loss whose population minimizer
/// in eta = f(z) T is f = log(m_1 / m_-1), i.e. half the log relative risk.
struct RelativeRiskLoss {
    static constexpr bool quadratic = false;
    const Vector& y;

    double value(const Vector& eta) const {
        double s = 0.0;
        for (Index i = 0; i < eta.size(); ++i) s += (1.0 - y[i]) * eta[i] + (y[i] != 0.0 ? y[i] * std::exp(-eta[i]) : 0.0);
        return s;
    }

    void derivatives(const Vector& eta, Vector& d1, Vector& d2) const {
        for (Index i = 0; i < eta.size(); ++i) {
            double e = y[i] != 0.0 ? y[i] * std::exp(-eta[i]) : 0.0;
            d1[i] = (1.0 - y[i]) - e;
            d2[i] = e;
        }
    }

    double deviance(Index i, double eta) const {
        return 2.0 * ((1.0 - y[i]) * eta + (y[i] != 0.0 ? y[i] * std::exp(-eta) : 0.0));
    }
};

/// Negative log partial likelihood with Breslow handling of ties:
///   sum_i status_i * (-eta_i + log sum_{j : time_j >= time_i} exp(eta_j)).
struct CoxLoss {
    static constexpr bool quadratic = false;
    const Vector& time;
    const Vector& status;
    std::vector<Index> order;       // ascending time, ties by original index
    std::vector<Index> group_end;   // order position one past the tie group of each position

    CoxLoss(const Vector& t, const Vector& s) : time(t), status(s) {
        const Index n = t.size();
        order.resize(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return t[a] < t[b]; });
        group_end.resize(static_cast<size_t>(n));
        size_t k = 0;
        while (k < order.size()) {
            size_t e = k;
            while (e < order.size() && t[order[e]] == t[order[k]]) ++e;
            for (size_t m = k; m < e; ++m) group_end[m] = static_cast<Index>(e);
            k = e;
        }
    }

    /// Risk-set sums of exp(eta - shift), indexed by order position (equal
    /// within a tie group).
    std::vector<double> risk_sums(const Vector& eta, double shift) const {
        const size_t n = order.size();
        std::vector<double> s(n);
        double acc = 0.0;
        size_t k = n;
        while (k > 0) {
            size_t e = k;
            size_t b = k;
            while (b > 0 && time[order[b - 1]] == time[order[k - 1]]) --b;
            for (size_t m = b; m < e; ++m) acc += std::exp(eta[order[m]] - shift);
            for (size_t m = b; m < e; ++m) s[m] = acc;
            k = b;
        }
        return s;
    }

    double value(const Vector& eta) const {
        if (eta.size() == 0) return 0.0;
        const double shift = eta.maxCoeff();
        auto s = risk_sums(eta, shift);
        double v = 0.0;
        for (size_t m = 0; m < order.size(); ++m) {
            Index i = order[m];
            if (status[i] != 0.0) v += status[i] * (-eta[i] + std::log(s[m]) + shift);
        }
        return v;
    }

    void derivatives(const Vector& eta, Vector& d1, Vector& d2) const {
        if (eta.size() == 0) return;
        const double shift = eta.maxCoeff();
        auto s = risk_sums(eta, shift);
        double a = 0.0, b = 0.0;
        size_t k = 0;
        while (k < order.size()) {
            size_t e = static_cast<size_t>(group_end[k]);
            for (size_t m = k; m < e; ++m) {
                Index i = order[m];
                if (status[i] != 0.0) {
                    a += status[i] / s[m];
                    b += status[i] / (s[m] * s[m]);
                }
            }
            for (size_t m = k; m < e; ++m) {
                Index i = order[m];
                double w = std::exp(eta[i] - shift);
                d1[i] = -status[i] + w * a;
                d2[i] = w * a - w * w * b;
            }
            k = e;
        }
    }
};

}  // namespace modcov
