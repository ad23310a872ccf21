#pragma once

#include <optional>
#include <string>
#include <vector>

#include "modcov/solvers/engine.hpp"

namespace modcov {

/// A penalized M-estimation problem: design, response, and an optional
/// per-subject augmentation matrix whose rows are T_i * a(Z_i). The
/// augmentation enters the objective as -gamma' (1/N) sum_i aug_i.
struct Problem {
    LossKind kind = LossKind::gaussian;
    Matrix x;
    Vector y;       // gaussian / logistic / relative_risk
    Vector offset;  // gaussian only, optional
    Vector time;    // cox
    Vector status;  // cox
    Matrix aug;     // N x p, optional
    Vector strata;  // fold stratification labels (treatment arm), optional

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }

    Vector linear_term() const {
        if (aug.size() == 0) return Vector();
        return aug.colwise().sum().transpose() / static_cast<double>(n());
    }

    void validate() const {
        const Index n = x.rows();
        require(n >= 1, "empty design");
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < x.cols(); ++j)
                require(std::isfinite(x(i, j)), "non-finite design value at row " + std::to_string(i + 1));
        if (aug.size()) require(aug.rows() == n && aug.cols() == x.cols(), "augmentation dimension mismatch");
        if (kind == LossKind::cox) {
            require(time.size() == n && status.size() == n, "dimension mismatch: time/status vs design rows");
            double events = 0;
            for (Index i = 0; i < n; ++i) {
                require(status[i] == 0.0 || status[i] == 1.0, "status must be 0 or 1");
                events += status[i];
            }
            require(events > 0, "cox fit needs at least one event");
        } else {
            require(y.size() == n, "dimension mismatch: y has " + std::to_string(y.size()) + " entries, design has " +
                                       std::to_string(n) + " rows");
            if (offset.size()) require(offset.size() == n, "dimension mismatch: offset");
            if (kind != LossKind::gaussian) {
                bool has0 = false, has1 = false;
                for (Index i = 0; i < n; ++i) {
                    require(y[i] == 0.0 || y[i] == 1.0, "binary outcome must be 0 or 1");
                    has0 = has0 || y[i] == 0.0;
                    has1 = has1 || y[i] == 1.0;
                }
                if (kind == LossKind::logistic)
                    require(has0 && has1, "binary fit needs both outcome classes");
                else
                    require(has1, "relative-risk fit needs at least one y = 1");
            }
        }
    }
};

inline Problem subset(const Problem& pr, const std::vector<Index>& rows) {
    Problem out;
    out.kind = pr.kind;
    out.x = take_rows(pr.x, rows);
    out.y = take(pr.y, rows);
    out.offset = take(pr.offset, rows);
    out.time = take(pr.time, rows);
    out.status = take(pr.status, rows);
    if (pr.aug.size()) out.aug = take_rows(pr.aug, rows);
    out.strata = take(pr.strata, rows);
    return out;
}

/// Calls `fn` with the loss object for this problem.
template <class Fn>
decltype(auto) with_loss(const Problem& pr, Fn&& fn) {
    switch (pr.kind) {
        case LossKind::gaussian: return fn(GaussianLoss{pr.y, pr.offset});
        case LossKind::logistic: return fn(LogisticLoss{pr.y});
        case LossKind::relative_risk: return fn(RelativeRiskLoss{pr.y});
        case LossKind::cox: return fn(CoxLoss(pr.time, pr.status));
    }
    fail(ErrorKind::unsupported, "unknown loss");
}

/// Smooth part of the objective: loss / N - gamma' linear_term.
inline double smooth_objective(const Problem& pr, const Vector& gamma) {
    Vector eta = pr.x * gamma;
    double v = with_loss(pr, [&](const auto& loss) { return loss.value(eta); }) / static_cast<double>(pr.n());
    if (pr.aug.size()) v -= gamma.dot(pr.linear_term());
    return v;
}

/// Gradient of the smooth part with respect to gamma.
inline Vector smooth_gradient(const Problem& pr, const Vector& gamma) {
    Vector eta = pr.x * gamma;
    Vector d1(pr.n()), d2(pr.n());
    with_loss(pr, [&](const auto& loss) {
        loss.derivatives(eta, d1, d2);
        return 0;
    });
    Vector g = pr.x.transpose() * d1 / static_cast<double>(pr.n());
    if (pr.aug.size()) g -= pr.linear_term();
    return g;
}

/// Largest violation of the Lasso optimality conditions at gamma.
inline double kkt_residual(const Problem& pr, const Vector& gamma, const PenaltySpec& pen) {
    Vector g = smooth_gradient(pr, gamma);
    Vector mu = pen.effective(pr.p());
    double worst = 0.0;
    for (Index j = 0; j < gamma.size(); ++j) {
        double thr = threshold_of(pen.lambda, mu[j]);
        double r;
        if (gamma[j] == 0.0)
            r = std::isinf(thr) ? 0.0 : std::max(0.0, std::abs(g[j]) - thr);
        else
            r = std::abs(g[j] + thr * (gamma[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, r);
    }
    return worst;
}

inline FitResult fit(const Problem& pr, const PenaltySpec& pen, const SolverOptions& opt = {},
                     const Vector* warm = nullptr) {
    pr.validate();
    pen.validate(pr.p());
    const Vector mu = pen.effective(pr.p());
    const Vector lin = pr.linear_term();
    FitResult res = with_loss(pr, [&](const auto& loss) {
        using L = std::decay_t<decltype(loss)>;
        detail::ProxNewton<L> solver(pr.x, loss, lin, opt);
        return solver.run(pen.lambda, mu, warm);
    });
    res.loss = pr.kind;
    res.kkt_residual = kkt_residual(pr, res.gamma, pen);
    return res;
}

// ---------------------------------------------------------------------------
// Family-specific entry points

/// (1/N) sum 1/2 (y_i - offset_i - gamma'x_i)^2 + penalty.
inline FitResult fit_gaussian_lasso(const Matrix& x, const Vector& y, const std::optional<Vector>& offset,
                                    const PenaltySpec& pen, const SolverOptions& opt = {}) {
    Problem pr;
    pr.kind = LossKind::gaussian;
    pr.x = x;
    pr.y = y;
    if (offset) pr.offset = *offset;
    return fit(pr, pen, opt);
}

/// Penalized logistic regression without intercept. `aug_offset` holds the
/// per-subject scalar c_i of the augmentation term -(1/N) sum_i c_i gamma'x_i.
inline FitResult fit_logistic_lasso(const Matrix& x, const Vector& y, const std::optional<Vector>& aug_offset,
                                    const PenaltySpec& pen, const SolverOptions& opt = {}) {
    Problem pr;
    pr.kind = LossKind::logistic;
    pr.x = x;
    pr.y = y;
    if (aug_offset) {
        require(aug_offset->size() == x.rows(), "dimension mismatch: augmentation offset");
        pr.aug = x.array().colwise() * aug_offset->array();
    }
    return fit(pr, pen, opt);
}

/// Relative-risk objective (1 - y) gamma'x + y exp(-gamma'x), same
/// augmentation convention as `fit_logistic_lasso`.
inline FitResult fit_relative_risk(const Matrix& x, const Vector& y, const std::optional<Vector>& aug_offset,
                                   const PenaltySpec& pen, const SolverOptions& opt = {}) {
    Problem pr;
    pr.kind = LossKind::relative_risk;
    pr.x = x;
    pr.y = y;
    if (aug_offset) {
        require(aug_offset->size() == x.rows(), "dimension mismatch: augmentation offset");
        pr.aug = x.array().colwise() * aug_offset->array();
    }
    return fit(pr, pen, opt);
}

/// Penalized Cox partial likelihood (Breslow ties). `aug_rows` are the
/// per-subject vectors T_i * a(Z_i).
inline FitResult fit_cox_lasso(const Matrix& x, const Vector& time, const Vector& status,
                               const std::optional<Matrix>& aug_rows, const PenaltySpec& pen,
                               const SolverOptions& opt = {}) {
    Problem pr;
    pr.kind = LossKind::cox;
    pr.x = x;
    pr.time = time;
    pr.status = status;
    if (aug_rows) pr.aug = *aug_rows;
    return fit(pr, pen, opt);
}

}  // namespace modcov
