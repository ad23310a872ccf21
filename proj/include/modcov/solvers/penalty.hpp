#pragma once

#include <limits>
#include <string>
#include <vector>

#include "modcov/common.hpp"

namespace modcov {

/// lambda * sum_j multiplier_j * |gamma_j|.
///
/// An empty `multipliers` vector means plain Lasso (all ones). With
/// `exempt_first` the first coefficient is left unpenalized regardless of
/// its multiplier.
struct PenaltySpec {
    double lambda = 0.0;
    Vector multipliers;
    bool exempt_first = false;

    Vector effective(Index p) const {
        Vector mu = multipliers.size() == 0 ? Vector::Ones(p) : multipliers;
        require(mu.size() == p, "penalty multipliers have length " + std::to_string(mu.size()) +
                                    ", expected " + std::to_string(p));
        if (exempt_first && p > 0) mu[0] = 0.0;
        return mu;
    }

    void validate(Index p) const {
        require(lambda >= 0 && !std::isnan(lambda), "lambda must be >= 0");
        Vector mu = effective(p);
        for (Index j = 0; j < p; ++j)
            require(std::isfinite(mu[j]) && mu[j] >= 0, "penalty multiplier " + std::to_string(j) +
                                                             " must be finite and >= 0");
    }

    PenaltySpec with_lambda(double l) const {
        PenaltySpec out = *this;
        out.lambda = l;
        return out;
    }
};

/// Per-coordinate soft-threshold level; infinite lambda zeroes every
/// penalized coordinate and leaves exempt ones free.
inline double threshold_of(double lambda, double mu) {
    return mu == 0.0 ? 0.0 : lambda * mu;
}

inline double penalty_value(const Vector& gamma, double lambda, const Vector& mu) {
    double s = 0.0;
    for (Index j = 0; j < gamma.size(); ++j)
        if (gamma[j] != 0.0) s += threshold_of(lambda, mu[j]) * std::abs(gamma[j]);
    return s;
}

struct SolverOptions {
    /// Convergence: max absolute coefficient change between full cycles.
    double tol = 1e-7;
    long max_cycles = 100000;
    int max_outer = 5000;
    /// Floor on per-subject curvature of non-quadratic losses.
    double weight_floor = 1e-8;
};

enum class LossKind { gaussian, logistic, relative_risk, cox };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::gaussian: return "gaussian";
        case LossKind::logistic: return "logistic";
        case LossKind::relative_risk: return "relative_risk";
        case LossKind::cox: return "cox";
    }
    return "?";
}

struct FitResult {
    Vector gamma;
    double lambda = 0.0;
    LossKind loss = LossKind::gaussian;
    double objective = 0.0;
    long iterations = 0;
    bool converged = false;
    double kkt_residual = 0.0;
    std::vector<std::string> warnings;

    Index nonzero() const {
        Index k = 0;
        for (Index j = 0; j < gamma.size(); ++j) k += gamma[j] != 0.0;
        return k;
    }
};

}  // namespace modcov
