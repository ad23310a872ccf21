#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "modcov/data_model.hpp"
#include "modcov/rng.hpp"

namespace modcov {

/// Product-limit estimate. Entry k describes the step at times[k].
struct SurvivalCurve {
    std::vector<double> times;     // distinct observed times, ascending
    std::vector<double> survival;  // S(t) just after times[k]
    std::vector<Index> at_risk;
    std::vector<Index> events;
    std::vector<Index> censored;

    /// S(t) for t >= 0 (right-continuous).
    double at(double t) const {
        double s = 1.0;
        for (size_t k = 0; k < times.size() && times[k] <= t; ++k) s = survival[k];
        return s;
    }
};

struct LogRankResult {
    double statistic = 0.0;
    double p_value = 1.0;
    double observed[2] = {0, 0};
    double expected[2] = {0, 0};
    double variance = 0.0;
};

struct CoxTwoGroup {
    bool estimable = false;
    double log_hr = 0.0;
    double hr = 1.0;
    double se = 0.0;
    double p_value = 1.0;
    int iterations = 0;
    std::string note;
};

namespace detail {

inline void check_survival(const Vector& time, const Vector& status) {
    require(time.size() == status.size(), "time/status length mismatch");
    for (Index i = 0; i < time.size(); ++i) {
        if (!std::isfinite(time[i]) || time[i] < 0)
            fail(ErrorKind::invalid_input, "time must be finite and >= 0 (row " + std::to_string(i + 1) + ")");
        if (status[i] != 0.0 && status[i] != 1.0)
            fail(ErrorKind::invalid_input, "status must be 0 or 1 (row " + std::to_string(i + 1) + ")");
    }
}

inline std::vector<Index> time_order(const Vector& time) {
    std::vector<Index> o(static_cast<size_t>(time.size()));
    std::iota(o.begin(), o.end(), Index{0});
    std::stable_sort(o.begin(), o.end(), [&](Index a, Index b) { return time[a] < time[b]; });
    return o;
}

/// Group labels mapped to 0/1 (the smaller label is 0).
inline std::vector<int> two_groups(const Vector& group) {
    std::vector<double> labels(group.data(), group.data() + group.size());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (labels.size() != 2)
        fail(ErrorKind::invalid_input, "need exactly two groups, found " + std::to_string(labels.size()));
    std::vector<int> g(static_cast<size_t>(group.size()));
    for (Index i = 0; i < group.size(); ++i) g[static_cast<size_t>(i)] = group[i] == labels[1] ? 1 : 0;
    return g;
}

inline double chisq1_p(double stat) { return std::erfc(std::sqrt(std::max(stat, 0.0) / 2.0)); }

}  // namespace detail

inline SurvivalCurve kaplan_meier(const Vector& time, const Vector& status) {
    require(time.size() >= 1, "kaplan_meier: need at least one subject");
    detail::check_survival(time, status);
    auto order = detail::time_order(time);
    SurvivalCurve c;
    double s = 1.0;
    size_t k = 0;
    while (k < order.size()) {
        size_t e = k;
        Index d = 0, cens = 0;
        while (e < order.size() && time[order[e]] == time[order[k]]) {
            (status[order[e]] > 0 ? d : cens)++;
            ++e;
        }
        const Index risk = static_cast<Index>(order.size() - k);
        s *= 1.0 - static_cast<double>(d) / static_cast<double>(risk);
        c.times.push_back(time[order[k]]);
        c.survival.push_back(s);
        c.at_risk.push_back(risk);
        c.events.push_back(d);
        c.censored.push_back(cens);
        k = e;
    }
    return c;
}

/// Two-sample log-rank test, hypergeometric variance, 1 df.
inline LogRankResult logrank(const Vector& time, const Vector& status, const Vector& group) {
    detail::check_survival(time, status);
    require(group.size() == time.size(), "logrank: group length mismatch");
    auto g = detail::two_groups(group);
    if (status.sum() <= 0) fail(ErrorKind::invalid_input, "logrank: no events");
    auto order = detail::time_order(time);
    double risk[2] = {0, 0};
    for (int v : g) risk[v] += 1;
    LogRankResult r;
    size_t k = 0;
    while (k < order.size()) {
        size_t e = k;
        double d[2] = {0, 0}, out[2] = {0, 0};
        while (e < order.size() && time[order[e]] == time[order[k]]) {
            const int gi = g[static_cast<size_t>(order[e])];
            d[gi] += status[order[e]];
            out[gi] += 1;
            ++e;
        }
        const double n = risk[0] + risk[1], dt = d[0] + d[1];
        if (dt > 0) {
            for (int j = 0; j < 2; ++j) {
                r.observed[j] += d[j];
                r.expected[j] += dt * risk[j] / n;
            }
            if (n > 1) r.variance += dt * (risk[0] / n) * (risk[1] / n) * (n - dt) / (n - 1);
        }
        risk[0] -= out[0];
        risk[1] -= out[1];
        k = e;
    }
    const double oe = r.observed[1] - r.expected[1];
    r.statistic = r.variance > 0 ? oe * oe / r.variance : 0.0;
    r.p_value = detail::chisq1_p(r.statistic);
    return r;
}

/// Unpenalized Cox fit on a small design, Breslow ties, Newton-Raphson with
/// step halving.
struct CoxFit {
    Vector beta;
    Matrix information;
    double loglik = 0.0;
    double loglik_null = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double cox_loglik(const Matrix& x, const Vector& time, const Vector& status, const std::vector<Index>& order,
                         const Vector& beta, Vector* grad, Matrix* hess) {
    const Index n = x.rows(), p = x.cols();
    Vector eta = x * beta;
    const double shift = n > 0 ? eta.maxCoeff() : 0.0;
    double ll = 0.0, s0 = 0.0;
    Vector s1 = Vector::Zero(p);
    Matrix s2 = Matrix::Zero(p, p);
    if (grad) grad->setZero(p);
    if (hess) hess->setZero(p, p);
    // accumulate risk sets from the longest time down
    Index k = n - 1;
    while (k >= 0) {
        Index e = k;
        while (e >= 0 && time[order[static_cast<size_t>(e)]] == time[order[static_cast<size_t>(k)]]) {
            const Index i = order[static_cast<size_t>(e)];
            const double w = std::exp(eta[i] - shift);
            s0 += w;
            s1 += w * x.row(i).transpose();
            s2 += w * x.row(i).transpose() * x.row(i);
            --e;
        }
        double d = 0.0;
        Vector xs = Vector::Zero(p);
        for (Index m = k; m > e; --m) {
            const Index i = order[static_cast<size_t>(m)];
            if (status[i] > 0) {
                d += 1;
                ll += eta[i];
                xs += x.row(i).transpose();
            }
        }
        if (d > 0) {
            ll -= d * (std::log(s0) + shift);
            Vector mean = s1 / s0;
            if (grad) *grad += xs - d * mean;
            if (hess) *hess += d * (s2 / s0 - mean * mean.transpose());
        }
        k = e;
    }
    return ll;
}

}  // namespace detail

/// `information` is the observed information at the returned beta.
inline CoxFit cox_newton(const Matrix& x, const Vector& time, const Vector& status, int max_iter = 50,
                         double tol = 1e-10) {
    detail::check_survival(time, status);
    require(x.rows() == time.size(), "cox_newton: design and time differ in length");
    auto order = detail::time_order(time);
    CoxFit f;
    f.beta = Vector::Zero(x.cols());
    Vector g;
    Matrix info;
    double ll = detail::cox_loglik(x, time, status, order, f.beta, &g, &info);
    f.loglik_null = ll;
    for (int it = 0; it < max_iter; ++it) {
        f.iterations = it + 1;
        Eigen::LDLT<Matrix> ldlt(info);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 1e-12).all()) break;
        Vector step = ldlt.solve(g);
        double t = 1.0, nll = ll;
        Vector nb;
        for (int h = 0; h < 30; ++h) {
            nb = f.beta + t * step;
            nll = detail::cox_loglik(x, time, status, order, nb, nullptr, nullptr);
            if (std::isfinite(nll) && nll >= ll - 1e-12) break;
            t /= 2;
        }
        const double change = (nb - f.beta).cwiseAbs().maxCoeff();
        f.beta = nb;
        ll = detail::cox_loglik(x, time, status, order, f.beta, &g, &info);
        if (change < tol || (change < 1e-6 && std::abs(nll - ll) < 1e-14 * (1 + std::abs(ll)))) {
            f.converged = true;
            break;
        }
    }
    f.loglik = ll;
    f.information = info;
    return f;
}

/// Score U(0) of the one-covariate partial likelihood with indicator of the
/// larger group label; equals the log-rank O - E for that group.
inline double cox_score_at_zero(const Vector& time, const Vector& status, const Vector& group) {
    auto g = detail::two_groups(group);
    Matrix x(group.size(), 1);
    for (Index i = 0; i < group.size(); ++i) x(i, 0) = g[static_cast<size_t>(i)];
    Vector grad;
    detail::cox_loglik(x, time, status, detail::time_order(time), Vector::Zero(1), &grad, nullptr);
    return grad[0];
}

/// Hazard ratio of the larger group label against the smaller one.
inline CoxTwoGroup cox_two_group(const Vector& time, const Vector& status, const Vector& group) {
    detail::check_survival(time, status);
    require(group.size() == time.size(), "cox_two_group: group length mismatch");
    auto g = detail::two_groups(group);
    CoxTwoGroup out;
    double ev[2] = {0, 0};
    for (Index i = 0; i < time.size(); ++i) ev[g[static_cast<size_t>(i)]] += status[i];
    if (ev[0] + ev[1] <= 0) fail(ErrorKind::invalid_input, "cox_two_group: no events");
    if (ev[0] == 0 || ev[1] == 0) {
        out.note = "non-estimable: no events in one group (monotone likelihood)";
        out.hr = std::numeric_limits<double>::quiet_NaN();
        out.log_hr = std::numeric_limits<double>::quiet_NaN();
        out.se = std::numeric_limits<double>::quiet_NaN();
        out.p_value = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    Matrix x(time.size(), 1);
    for (Index i = 0; i < time.size(); ++i) x(i, 0) = g[static_cast<size_t>(i)];
    CoxFit f = cox_newton(x, time, status);
    out.iterations = f.iterations;
    if (!f.converged || !(f.information(0, 0) > 0)) {
        out.note = "non-estimable: Newton iteration did not converge";
        out.hr = out.log_hr = out.se = out.p_value = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.estimable = true;
    out.log_hr = f.beta[0];
    out.hr = std::exp(out.log_hr);
    out.se = 1.0 / std::sqrt(f.information(0, 0));
    const double z = out.log_hr / out.se;
    out.p_value = detail::chisq1_p(z * z);
    return out;
}

/// Wald test of the treatment x score term in a Cox model on
/// {treatment, score, treatment x score}.
struct InteractionTest {
    bool estimable = false;
    Vector coefficients;  // treatment, score, interaction
    Vector se;
    double p_value = std::numeric_limits<double>::quiet_NaN();
};

inline InteractionTest interaction_wald(const Vector& time, const Vector& status, const Vector& treatment,
                                        const Vector& score) {
    detail::check_survival(time, status);
    const Index n = time.size();
    require(treatment.size() == n && score.size() == n, "interaction_wald: length mismatch");
    Matrix x(n, 3);
    x.col(0) = treatment;
    x.col(1) = score;
    x.col(2) = treatment.cwiseProduct(score);
    InteractionTest out;
    if (status.sum() <= 0) return out;
    CoxFit f = cox_newton(x, time, status);
    Eigen::FullPivLU<Matrix> lu(f.information);
    if (!f.converged || !lu.isInvertible()) return out;
    Matrix cov = lu.inverse();
    out.coefficients = f.beta;
    out.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    if (!(out.se[2] > 0)) return out;
    const double z = f.beta[2] / out.se[2];
    out.estimable = true;
    out.p_value = detail::chisq1_p(z * z);
    return out;
}

// ---------------------------------------------------------------------------
// Train / test splitting

struct SplitRule {
    enum class Kind { first_k_per_arm, random_fraction } kind = Kind::random_fraction;
    Index k = 0;
    double fraction = 0.5;  // share of rows going to training
    std::uint64_t seed = 0;

    static SplitRule first_k(Index k) { return {Kind::first_k_per_arm, k, 0.5, 0}; }
    static SplitRule random(double fraction, std::uint64_t seed) { return {Kind::random_fraction, 0, fraction, seed}; }
};

struct SplitIndices {
    std::vector<Index> train, test;
};

/// Row indices, each side in original file order.
inline SplitIndices split_indices(const Vector& treatment, const SplitRule& rule) {
    const Index n = treatment.size();
    std::vector<char> in_train(static_cast<size_t>(n), 0);
    if (rule.kind == SplitRule::Kind::first_k_per_arm) {
        require(rule.k >= 1, "split: k must be >= 1");
        Index pos = 0, neg = 0, npos = 0, nneg = 0;
        for (Index i = 0; i < n; ++i) (treatment[i] > 0 ? npos : nneg)++;
        if (npos < rule.k || nneg < rule.k)
            fail(ErrorKind::invalid_input, "split: k=" + std::to_string(rule.k) + " per arm but arms have " +
                                               std::to_string(npos) + " and " + std::to_string(nneg) + " rows");
        for (Index i = 0; i < n; ++i) {
            Index& c = treatment[i] > 0 ? pos : neg;
            if (c < rule.k) {
                in_train[static_cast<size_t>(i)] = 1;
                ++c;
            }
        }
    } else {
        require(rule.fraction > 0 && rule.fraction < 1, "split: fraction must be in (0, 1)");
        const Index ntrain = static_cast<Index>(std::llround(rule.fraction * static_cast<double>(n)));
        if (ntrain < 1 || ntrain >= n) fail(ErrorKind::invalid_input, "split: fraction leaves an empty side");
        std::vector<Index> perm(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        Rng rng(splitmix64(rule.seed));
        for (Index i = n - 1; i > 0; --i) {
            std::uniform_int_distribution<Index> u(0, i);
            std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(u(rng))]);
        }
        for (Index i = 0; i < ntrain; ++i) in_train[static_cast<size_t>(perm[static_cast<size_t>(i)])] = 1;
    }
    SplitIndices s;
    for (Index i = 0; i < n; ++i) (in_train[static_cast<size_t>(i)] ? s.train : s.test).push_back(i);
    return s;
}

inline std::pair<Dataset, Dataset> split_train_test(const Dataset& d, const SplitRule& rule) {
    auto s = split_indices(d.treatment, rule);
    return {subset(d, s.train), subset(d, s.test)};
}

}  // namespace modcov
