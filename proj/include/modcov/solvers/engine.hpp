#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "modcov/solvers/losses.hpp"
#include "modcov/solvers/penalty.hpp"

namespace modcov::detail {

/// Penalized objective
///   F(gamma) = loss(X gamma) / N - gamma' lin + lambda * sum_j mu_j |gamma_j|
/// minimized by proximal Newton: each outer step builds the quadratic model
/// of the smooth part in eta (gradient d1, diagonal curvature d2) and solves
/// the penalized weighted least-squares subproblem by cyclic coordinate
/// descent with an active set. The step is then backtracked on F.
template <class Loss>
class ProxNewton {
public:
    ProxNewton(const Matrix& x, const Loss& loss, const Vector& lin, const SolverOptions& opt)
        : x_(x), loss_(loss), lin_(lin), opt_(opt), n_(x.rows()), p_(x.cols()) {
        col_sq_.resize(p_);
    }

    double smooth(const Vector& eta, const Vector& gamma) const {
        double v = loss_.value(eta) / static_cast<double>(n_);
        if (lin_.size()) v -= gamma.dot(lin_);
        return v;
    }

    FitResult run(double lambda, const Vector& mu, const Vector* warm) {
        FitResult res;
        res.lambda = lambda;
        Vector gamma = warm && warm->size() == p_ ? *warm : Vector::Zero(p_);
        for (Index j = 0; j < p_; ++j)
            if (std::isinf(threshold_of(lambda, mu[j]))) gamma[j] = 0.0;
        Vector eta = x_ * gamma;
        double f_old = smooth(eta, gamma) + penalty_value(gamma, lambda, mu);

        Vector d1(n_), d2(n_), beta(p_), q(n_);
        long cycles = 0;
        int bad_steps = 0;
        bool converged = false;
        const double inv_n = 1.0 / static_cast<double>(n_);

        for (int outer = 0; outer < opt_.max_outer; ++outer) {
            loss_.derivatives(eta, d1, d2);
            for (Index i = 0; i < n_; ++i) {
                if (!Loss::quadratic) d2[i] = std::max(d2[i], opt_.weight_floor);
                d1[i] *= inv_n;
                d2[i] *= inv_n;
            }
            for (Index j = 0; j < p_; ++j) col_sq_[j] = x_.col(j).cwiseAbs2().dot(d2);

            beta = gamma;
            q = d1;  // q_i = d1_i + d2_i * (x_i'(beta - gamma))
            bool inner_ok = coordinate_descent(beta, q, d2, lambda, mu, cycles);
            if (diverged_) {
                res.warnings.push_back(kDivergence);
                break;
            }

            if (Loss::quadratic) {
                gamma = beta;
                eta = x_ * gamma;
                converged = inner_ok;
                break;
            }

            Vector step = beta - gamma;
            const double max_step = step.cwiseAbs().maxCoeff();
            Vector dir_eta = x_ * step;
            double t = 1.0;
            bool accepted = false;
            Vector cand(p_), cand_eta(n_);
            double f_new = f_old;
            for (int ls = 0; ls < 40; ++ls) {
                cand = gamma + t * step;
                cand_eta = eta + t * dir_eta;
                f_new = smooth(cand_eta, cand) + penalty_value(cand, lambda, mu);
                if (std::isfinite(f_new) && f_new <= f_old + 1e-13 * (1.0 + std::abs(f_old))) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                if (max_step < 1e-6) {
                    converged = inner_ok;
                    break;
                }
                if (++bad_steps >= 3) {
                    res.warnings.push_back("objective failed to improve in 3 consecutive outer iterations (divergence)");
                    break;
                }
                continue;
            }
            bad_steps = 0;
            const double change = t * max_step;
            gamma = cand;
            eta = cand_eta;
            f_old = f_new;
            if (eta.cwiseAbs().maxCoeff() > kEtaLimit) {
                res.warnings.push_back(kDivergence);
                break;
            }
            if (change < opt_.tol && inner_ok) {
                converged = true;
                break;
            }
            if (cycles >= opt_.max_cycles) break;
        }

        res.gamma = gamma;
        res.iterations = cycles;
        res.converged = converged;
        res.objective = smooth(eta, gamma) + penalty_value(gamma, lambda, mu);
        if (!converged && res.warnings.empty()) res.warnings.push_back("solver did not converge");
        for (Index j = 0; j < p_; ++j)
            if (!std::isfinite(gamma[j])) {
                res.converged = false;
                res.warnings.push_back("non-finite coefficient");
                break;
            }
        return res;
    }

private:
    /// Returns false when the cycle cap is hit.
    bool coordinate_descent(Vector& beta, Vector& q, const Vector& w, double lambda, const Vector& mu,
                            long& cycles) {
        std::vector<char> active(static_cast<size_t>(p_), 0);
        for (Index j = 0; j < p_; ++j) active[static_cast<size_t>(j)] = beta[j] != 0.0;
        auto update = [&](Index j) -> double {
            const double s = col_sq_[j];
            const double thr = threshold_of(lambda, mu[j]);
            if (!(s > 0.0)) {
                double old = beta[j];
                if (old != 0.0) {
                    // zero-curvature column: nothing in the loss depends on it
                    beta[j] = 0.0;
                    return std::abs(old);
                }
                return 0.0;
            }
            double g = x_.col(j).dot(q);
            if (lin_.size()) g -= lin_[j];
            const double old = beta[j];
            const double nb = std::isinf(thr) ? 0.0 : soft_threshold(s * old - g, thr) / s;
            const double delta = nb - old;
            if (delta != 0.0) {
                beta[j] = nb;
                q.noalias() += (delta * x_.col(j)).cwiseProduct(w);
            }
            return std::abs(delta);
        };
        while (cycles < opt_.max_cycles) {
            double full_change = 0.0;
            for (Index j = 0; j < p_; ++j) {
                full_change = std::max(full_change, update(j));
                if (beta[j] != 0.0) active[static_cast<size_t>(j)] = 1;
            }
            ++cycles;
            if (full_change < opt_.tol) return true;
            int inner = 0;
            while (cycles < opt_.max_cycles) {
                double change = 0.0;
                for (Index j = 0; j < p_; ++j)
                    if (active[static_cast<size_t>(j)]) change = std::max(change, update(j));
                ++cycles;
                if (change < opt_.tol) break;
                if (++inner % 10 == 0) {
                    support_jump(beta, q, w, lambda, mu);
                    if (!Loss::quadratic && (x_ * beta).cwiseAbs().maxCoeff() > kEtaLimit) {
                        diverged_ = true;
                        return false;
                    }
                }
            }
        }
        return false;
    }

    /// Moves toward the exact minimizer of the quadratic subproblem on the
    /// current support and signs. If a coefficient would cross zero the step
    /// stops there, that coefficient leaves the support and the solve is
    /// repeated. Every accepted step lowers the subproblem objective.
    void support_jump(Vector& beta, Vector& q, const Vector& w, double lambda, const Vector& mu) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            std::vector<Index> a;
            for (Index j = 0; j < p_; ++j)
                if (beta[j] != 0.0) a.push_back(j);
            const Index k = static_cast<Index>(a.size());
            if (k == 0) return;
            Matrix xa(n_, k);
            for (Index c = 0; c < k; ++c) xa.col(c) = x_.col(a[static_cast<size_t>(c)]);
            Matrix h = xa.transpose() * w.asDiagonal() * xa;
            Vector rhs = -(xa.transpose() * q);
            for (Index c = 0; c < k; ++c) {
                const Index j = a[static_cast<size_t>(c)];
                if (lin_.size()) rhs[c] += lin_[j];
                rhs[c] -= lambda * mu[j] * (beta[j] > 0 ? 1.0 : -1.0);
            }
            const double scale = std::max(1e-300, rhs.cwiseAbs().maxCoeff() + h.diagonal().cwiseAbs().maxCoeff());
            Eigen::LDLT<Matrix> ldlt(h);
            Vector delta;
            bool bounded = false;
            if (ldlt.info() == Eigen::Success) {
                delta = ldlt.solve(rhs);
                bounded = delta.allFinite() && (h * delta - rhs).cwiseAbs().maxCoeff() <= 1e-9 * scale;
            }
            double t = 1.0;
            if (!bounded) {
                // singular and inconsistent: the restricted objective falls
                // without bound along a null direction, so follow it until a
                // coefficient reaches zero
                Eigen::SelfAdjointEigenSolver<Matrix> es(h);
                if (es.info() != Eigen::Success) return;
                if (es.eigenvalues()[0] > 1e-10 * scale) return;
                delta = es.eigenvectors().col(0);
                if (rhs.dot(delta) < 0) delta = -delta;
                t = std::numeric_limits<double>::infinity();
            }
            Index hit = -1;
            for (Index c = 0; c < k; ++c) {
                const double b = beta[a[static_cast<size_t>(c)]];
                if (b + delta[c] == 0.0 || (b + delta[c] > 0) != (b > 0)) {
                    const double tc = -b / delta[c];
                    if (tc < t) {
                        t = tc;
                        hit = c;
                    }
                }
            }
            if (!(t > 0) || std::isinf(t)) return;
            for (Index c = 0; c < k; ++c) beta[a[static_cast<size_t>(c)]] += t * delta[c];
            if (hit >= 0) beta[a[static_cast<size_t>(hit)]] = 0.0;
            q.noalias() += (xa * (t * delta)).cwiseProduct(w);
            if (hit < 0) return;
        }
    }

    static constexpr double kEtaLimit = 1e4;
    static constexpr const char* kDivergence =
        "linear predictor exceeded 1e4 in magnitude (divergence: the objective has no finite minimizer, "
        "e.g. separated data)";
    bool diverged_ = false;

    const Matrix& x_;
    const Loss& loss_;
    const Vector& lin_;
    SolverOptions opt_;
    Index n_, p_;
    Vector col_sq_;
};

}  // namespace modcov::detail
