#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "modcov/data_model.hpp"
#include "modcov/solvers/lambda_path.hpp"

namespace modcov {

/// Nelson-Aalen martingale residuals at horizon tau.
struct MartingaleResiduals {
    double tau = 0.0;
    Vector values;
};

/// M_i(tau) = N_i(tau) - sum_{event times u <= min(X_i, tau)} dN(u) / Y(u),
/// where Y(u) counts subjects with X_j >= u (a subject is at risk at its own
/// event time). tau defaults to the largest observed time.
inline MartingaleResiduals martingale_residuals(const Vector& time, const Vector& status,
                                                std::optional<double> tau = std::nullopt) {
    const Index n = time.size();
    require(status.size() == n, "martingale_residuals: time/status length mismatch");
    require(n >= 1, "martingale_residuals: empty input");
    double events = 0;
    for (Index i = 0; i < n; ++i) {
        require(status[i] == 0.0 || status[i] == 1.0, "martingale_residuals: status must be 0 or 1");
        events += status[i];
    }
    if (events == 0) fail(ErrorKind::invalid_input, "martingale_residuals: no events");
    MartingaleResiduals out;
    out.tau = tau ? *tau : time.maxCoeff();

    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return time[a] < time[b]; });
    // cumulative hazard just after each distinct time, restricted to u <= tau
    std::vector<double> cumhaz(static_cast<size_t>(n));
    double h = 0.0;
    size_t k = 0;
    while (k < order.size()) {
        size_t e = k;
        double d = 0.0;
        while (e < order.size() && time[order[e]] == time[order[k]]) d += status[order[e++]];
        const double at_risk = static_cast<double>(order.size() - k);
        if (time[order[k]] <= out.tau) h += d / at_risk;
        for (size_t m = k; m < e; ++m) cumhaz[m] = h;
        k = e;
    }
    out.values.resize(n);
    for (size_t m = 0; m < order.size(); ++m) {
        Index i = order[m];
        const double counted = (status[i] > 0 && time[i] <= out.tau) ? 1.0 : 0.0;
        out.values[i] = counted - cumhaz[m];
    }
    return out;
}

/// Main-effect nuisance model m(z) = E(Y | Z = z) (continuous), Prob(Y = 1 |
/// Z = z) (binary) or E(M(tau) | Z = z) (survival) on basis B(z).
struct MainEffectModel {
    Family family = Family::gaussian;
    BasisSpec basis;
    Vector xi;
    Vector fitted;
    double lambda = 0.0;
    bool lambda_from_cv = false;
    std::optional<double> tau;  // survival only

    Vector predict(const Matrix& z) const {
        Vector lin = basis.apply(z) * xi;
        if (family == Family::binomial)
            for (Index i = 0; i < lin.size(); ++i) lin[i] = expit(lin[i]);
        return lin;
    }
};

struct MainEffectOptions {
    std::optional<double> lambda;  // fixed lambda; nullopt = cross-validate
    int folds = 20;
    std::uint64_t seed = 0;
    BasisRequest basis;
    int n_lambda = 100;
    double lambda_ratio = 1e-3;
    std::optional<double> tau;
    SolverOptions solver;
};

namespace detail {

inline MainEffectModel fit_main_effect(Family family, const Matrix& z, const std::vector<std::string>& names,
                                       const Vector& response, const Vector& treatment, const MainEffectOptions& opt) {
    auto [b, spec] = build_basis(z, opt.basis, names);
    Problem pr;
    pr.kind = family == Family::binomial ? LossKind::logistic : LossKind::gaussian;
    pr.x = b;
    pr.y = response;
    pr.strata = treatment;
    PenaltySpec pen;
    pen.exempt_first = true;
    MainEffectModel m;
    m.family = family;
    if (opt.lambda) {
        pen.lambda = *opt.lambda;
        FitResult r = fit(pr, pen, opt.solver);
        m.xi = r.gamma;
        m.lambda = *opt.lambda;
    } else {
        LambdaGrid grid = lambda_grid(pr, pen, opt.n_lambda, opt.lambda_ratio, opt.solver);
        CvOptions cv;
        cv.folds = opt.folds;
        cv.seed = opt.seed;
        cv.solver = opt.solver;
        LambdaPath path = cross_validate(pr, pen, grid.lambdas, cv);
        m.xi = path.selected_fit().gamma;
        m.lambda = path.selected_lambda;
        m.lambda_from_cv = true;
    }
    m.basis = std::move(spec);
    Vector lin = b * m.xi;
    if (family == Family::binomial)
        for (Index i = 0; i < lin.size(); ++i) lin[i] = expit(lin[i]);
    m.fitted = lin;
    return m;
}

}  // namespace detail

/// Lasso regression of the family-matched response on B(Z) with an
/// unpenalized intercept: least squares on Y (continuous), logistic on Y
/// (binary), least squares on the martingale residuals (survival).
inline MainEffectModel estimate_main_effect(const Dataset& d, const MainEffectOptions& opt = {}) {
    check_dataset(d);
    if (d.family == Family::cox) {
        auto mr = martingale_residuals(d.time, d.status, opt.tau);
        MainEffectModel m = detail::fit_main_effect(Family::cox, d.z, d.covariate_names, mr.values, d.treatment, opt);
        m.tau = mr.tau;
        return m;
    }
    return detail::fit_main_effect(d.family, d.z, d.covariate_names, d.y, d.treatment, opt);
}

/// Survival variant with precomputed residuals.
inline MainEffectModel estimate_main_effect(const Dataset& d, const MartingaleResiduals& mr,
                                            const MainEffectOptions& opt = {}) {
    require(d.family == Family::cox, "martingale-residual main effect needs survival data");
    MainEffectModel m = detail::fit_main_effect(Family::cox, d.z, d.covariate_names, mr.values, d.treatment, opt);
    m.tau = mr.tau;
    return m;
}

/// Per-subject augmentation vectors a(Z_i) = W(Z_i) * r(Z_i).
struct AugmentationPlan {
    Matrix a;  // N x p
    Vector r;  // N
    Family family = Family::gaussian;

    /// Rows T_i * a(Z_i), the form consumed by the solvers.
    Matrix signed_rows(const Vector& treatment) const {
        require(treatment.size() == a.rows(), "augmentation/treatment length mismatch");
        return a.array().colwise() * treatment.array();
    }
};

namespace detail {

inline AugmentationPlan plan_from_r(const Matrix& w, Vector r, Family family) {
    require(w.rows() == r.size(), "augmentation: W rows and fitted values differ in length");
    AugmentationPlan plan;
    plan.family = family;
    plan.a = w.array().colwise() * r.array();
    plan.r = std::move(r);
    return plan;
}

}  // namespace detail

/// a(z) = -W(z) m(z) / 2.
inline AugmentationPlan augmentation_continuous(const Matrix& w, const MainEffectModel& main) {
    if (main.family != Family::gaussian)
        fail(ErrorKind::unsupported, "continuous augmentation needs a continuous main-effect model");
    return detail::plan_from_r(w, -0.5 * main.fitted, Family::gaussian);
}

/// a(z) = -W(z) (m(z) - 1/2) / 2. Also used for the relative-risk objective.
inline AugmentationPlan augmentation_binary(const Matrix& w, const MainEffectModel& main) {
    if (main.family != Family::binomial)
        fail(ErrorKind::unsupported, "binary augmentation needs a binary main-effect model");
    return detail::plan_from_r(w, -0.5 * (main.fitted.array() - 0.5).matrix(), Family::binomial);
}

/// a(z) = -W(z) E{M(tau) | z} / 2, with E{M(tau) | z} from a regression of
/// the martingale residuals on B(z).
inline AugmentationPlan augmentation_survival(const Matrix& w, const MartingaleResiduals& mart,
                                              const MainEffectModel& main) {
    if (main.family != Family::cox)
        fail(ErrorKind::unsupported, "survival augmentation needs a main-effect model fitted on martingale residuals");
    require(mart.values.size() == w.rows(), "augmentation: residuals and W differ in length");
    return detail::plan_from_r(w, -0.5 * main.fitted, Family::cox);
}

}  // namespace modcov
