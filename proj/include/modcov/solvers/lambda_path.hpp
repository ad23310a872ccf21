#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "modcov/rng.hpp"
#include "modcov/solvers/problem.hpp"

namespace modcov {

struct LambdaGrid {
    std::vector<double> lambdas;  // strictly decreasing
    double lambda_max = 0.0;
    std::vector<std::string> warnings;
};

/// Null model: every penalized coefficient at zero, exempt ones fitted.
inline FitResult fit_null_model(const Problem& pr, const PenaltySpec& pen, const SolverOptions& opt = {}) {
    return fit(pr, pen.with_lambda(std::numeric_limits<double>::infinity()), opt);
}

/// Log-spaced grid from the smallest lambda with an all-zero penalized
/// solution down to ratio * lambda_max.
inline LambdaGrid lambda_grid(const Problem& pr, const PenaltySpec& pen, int n = 100, double ratio = 1e-3,
                              const SolverOptions& opt = {}) {
    require(n >= 1, "lambda grid needs at least one point");
    require(ratio > 0 && ratio < 1, "lambda ratio must be in (0, 1)");
    FitResult null_fit = fit_null_model(pr, pen, opt);
    Vector g = smooth_gradient(pr, null_fit.gamma);
    Vector mu = pen.effective(pr.p());
    double lmax = 0.0;
    for (Index j = 0; j < pr.p(); ++j)
        if (mu[j] > 0) lmax = std::max(lmax, std::abs(g[j]) / mu[j]);
    LambdaGrid grid;
    if (!(lmax > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff())) || !std::isfinite(lmax)) {
        grid.lambdas = {0.0};
        grid.warnings.push_back("null-model gradient is zero (constant outcome?); grid is {0}");
        return grid;
    }
    grid.lambda_max = lmax;
    grid.lambdas.resize(static_cast<size_t>(n));
    if (n == 1) {
        grid.lambdas[0] = lmax;
        return grid;
    }
    const double step = std::log(ratio) / static_cast<double>(n - 1);
    for (int k = 0; k < n; ++k) grid.lambdas[static_cast<size_t>(k)] = lmax * std::exp(step * k);
    grid.lambdas[0] = lmax;
    return grid;
}

/// Warm-started fits along a decreasing grid.
inline std::vector<FitResult> fit_path(const Problem& pr, const PenaltySpec& pen, const std::vector<double>& grid,
                                       const SolverOptions& opt = {}) {
    std::vector<FitResult> out;
    out.reserve(grid.size());
    Vector warm;
    for (double l : grid) {
        FitResult r = fit(pr, pen.with_lambda(l), opt, warm.size() ? &warm : nullptr);
        warm = r.gamma;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Out-of-sample value of the training objective on `test` rows, on the
/// deviance scale (twice the loss) and summed over the held-out subjects.
/// The augmentation term of held-out subjects is included so that the
/// criterion matches what was minimized. Cox uses the full-minus-training
/// partial likelihood difference.
inline double heldout_deviance(const Problem& full, const std::vector<Index>& train,
                               const std::vector<Index>& test, const Vector& gamma) {
    double aug = 0.0;
    if (full.aug.size())
        for (Index i : test) aug += full.aug.row(i).dot(gamma);
    if (full.kind == LossKind::cox) {
        Vector eta_full = full.x * gamma;
        Vector t_tr = take(full.time, train), s_tr = take(full.status, train);
        Vector eta_tr = take(eta_full, train);
        double lf = CoxLoss(full.time, full.status).value(eta_full);
        double lt = CoxLoss(t_tr, s_tr).value(eta_tr);
        return 2.0 * (lf - lt) - 2.0 * aug;
    }
    double dev = 0.0;
    with_loss(full, [&](const auto& loss) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(loss)>, CoxLoss>)
            for (Index i : test) dev += loss.deviance(i, full.x.row(i).dot(gamma));
        return 0;
    });
    return dev - 2.0 * aug;
}

/// Full-data criterion on the same scale as `heldout_deviance`, per subject.
inline double training_deviance(const Problem& pr, const Vector& gamma) {
    return 2.0 * smooth_objective(pr, gamma);
}

struct CvOptions {
    int folds = 20;
    std::uint64_t seed = 0;
    bool one_se = false;
    SolverOptions solver;
};

struct LambdaPath {
    std::vector<double> grid;
    std::vector<FitResult> fits;       // full-data fits, one per grid point
    std::vector<double> cv_mean;
    std::vector<double> cv_se;
    std::vector<double> train_loss;    // full-data criterion per grid point
    std::vector<int> fold_of;          // fold index per subject
    size_t selected = 0;
    double selected_lambda = 0.0;
    std::vector<std::string> warnings;

    const FitResult& selected_fit() const { return fits[selected]; }
};

/// Seeded fold assignment, stratified by `strata` labels (and event status
/// for Cox). Each stratum is shuffled and dealt round-robin, continuing the
/// fold counter across strata so fold sizes differ by at most one.
inline std::vector<int> assign_folds(const Problem& pr, int folds, std::uint64_t seed) {
    const Index n = pr.n();
    std::vector<std::pair<int, Index>> keyed;
    keyed.reserve(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
        int key = 0;
        if (pr.strata.size()) key = pr.strata[i] > 0 ? 1 : 0;
        if (pr.kind == LossKind::cox) key = key * 2 + (pr.status[i] > 0 ? 1 : 0);
        keyed.push_back({key, i});
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::mt19937_64 rng(splitmix64(seed));
    std::vector<int> fold_of(static_cast<size_t>(n));
    int counter = 0;
    size_t k = 0;
    while (k < keyed.size()) {
        size_t e = k;
        while (e < keyed.size() && keyed[e].first == keyed[k].first) ++e;
        std::vector<Index> members;
        for (size_t m = k; m < e; ++m) members.push_back(keyed[m].second);
        std::shuffle(members.begin(), members.end(), rng);
        for (Index i : members) fold_of[static_cast<size_t>(i)] = counter++ % folds;
        k = e;
    }
    return fold_of;
}

namespace detail {

inline bool fold_usable(const Problem& pr, const std::vector<Index>& train) {
    if (train.empty()) return false;
    if (pr.kind == LossKind::cox) {
        for (Index i : train)
            if (pr.status[i] > 0) return true;
        return false;
    }
    if (pr.kind == LossKind::logistic || pr.kind == LossKind::relative_risk) {
        bool h0 = false, h1 = false;
        for (Index i : train) (pr.y[i] > 0.5 ? h1 : h0) = true;
        return h0 && h1;
    }
    return true;
}

}  // namespace detail

/// K-fold cross-validation over a fixed decreasing grid. Selected lambda is
/// the CV minimizer, or with `one_se` the largest lambda within one standard
/// error of the minimum.
inline LambdaPath cross_validate(const Problem& pr, const PenaltySpec& pen, const std::vector<double>& grid,
                                 const CvOptions& opt) {
    require(opt.folds >= 2, "cross-validation needs folds >= 2");
    require(!grid.empty(), "empty lambda grid");
    for (size_t k = 1; k < grid.size(); ++k) require(grid[k] < grid[k - 1], "lambda grid must be strictly decreasing");
    pr.validate();
    const Index n = pr.n();
    LambdaPath path;
    path.grid = grid;
    int folds = opt.folds;
    if (folds > n) {
        path.warnings.push_back("folds reduced from " + std::to_string(folds) + " to N=" + std::to_string(n));
        folds = static_cast<int>(n);
    }

    std::vector<std::vector<Index>> train(static_cast<size_t>(folds)), test(static_cast<size_t>(folds));
    auto build = [&](std::uint64_t seed) {
        path.fold_of = assign_folds(pr, folds, seed);
        for (auto& v : train) v.clear();
        for (auto& v : test) v.clear();
        for (Index i = 0; i < n; ++i)
            for (int f = 0; f < folds; ++f) (path.fold_of[static_cast<size_t>(i)] == f ? test : train)[static_cast<size_t>(f)].push_back(i);
        for (int f = 0; f < folds; ++f)
            if (test[static_cast<size_t>(f)].empty() || !detail::fold_usable(pr, train[static_cast<size_t>(f)])) return false;
        return true;
    };
    if (!build(opt.seed)) {
        path.warnings.push_back("fold assignment rejected (training fold lacks a class or events); redrawn");
        if (!build(splitmix64(opt.seed ^ 0x5bd1e995ULL)))
            fail(ErrorKind::invalid_input, "cross-validation: cannot form folds whose training sets contain both "
                                           "classes / at least one event");
    }

    path.fits = fit_path(pr, pen, grid, opt.solver);
    for (const auto& f : path.fits) path.train_loss.push_back(training_deviance(pr, f.gamma));

    const size_t L = grid.size();
    std::vector<std::vector<double>> loss(static_cast<size_t>(folds), std::vector<double>(L));
    for (int f = 0; f < folds; ++f) {
        const auto& tr = train[static_cast<size_t>(f)];
        const auto& te = test[static_cast<size_t>(f)];
        Problem sub = subset(pr, tr);
        auto fits = fit_path(sub, pen, grid, opt.solver);
        for (size_t l = 0; l < L; ++l)
            loss[static_cast<size_t>(f)][l] = heldout_deviance(pr, tr, te, fits[l].gamma) / static_cast<double>(te.size());
    }

    path.cv_mean.assign(L, 0.0);
    path.cv_se.assign(L, 0.0);
    for (size_t l = 0; l < L; ++l) {
        double m = 0.0;
        for (int f = 0; f < folds; ++f) m += static_cast<double>(test[static_cast<size_t>(f)].size()) * loss[static_cast<size_t>(f)][l];
        m /= static_cast<double>(n);
        double v = 0.0;
        for (int f = 0; f < folds; ++f) {
            double d = loss[static_cast<size_t>(f)][l] - m;
            v += static_cast<double>(test[static_cast<size_t>(f)].size()) * d * d;
        }
        v /= static_cast<double>(n);
        path.cv_mean[l] = m;
        path.cv_se[l] = std::sqrt(v / static_cast<double>(folds - 1));
    }
    size_t best = 0;
    for (size_t l = 1; l < L; ++l)
        if (path.cv_mean[l] < path.cv_mean[best]) best = l;
    if (opt.one_se) {
        const double bound = path.cv_mean[best] + path.cv_se[best];
        for (size_t l = 0; l <= best; ++l)
            if (path.cv_mean[l] <= bound) {
                best = l;
                break;
            }
    }
    path.selected = best;
    path.selected_lambda = grid[best];
    return path;
}

}  // namespace modcov
