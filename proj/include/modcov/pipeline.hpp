#pragma once

#include <optional>
#include <string>
#include <vector>

#include "modcov/augmentation.hpp"
#include "modcov/data_model.hpp"
#include "modcov/rng.hpp"
#include "modcov/scoring.hpp"
#include "modcov/solvers/adaptive_weights.hpp"
#include "modcov/solvers/lambda_path.hpp"

namespace modcov {

/// Everything needed to go from a dataset to an interaction model.
struct FitOptions {
    Method method = Method::modified_covariate;
    BinaryLink link = BinaryLink::risk_difference;
    std::optional<double> lambda;  // nullopt = choose by cross-validation
    int folds = 20;
    std::uint64_t seed = 0;
    AdaptiveMode adaptive = AdaptiveMode::none;
    WeightConvention weight_convention = WeightConvention::reciprocal;
    bool exempt_first = false;
    bool one_se = false;
    int n_lambda = 100;
    double lambda_ratio = 1e-3;
    std::optional<double> tau;
    BasisRequest basis;
    SolverOptions solver;
};

struct FitReport {
    InteractionModel model;
    FitResult fit;
    std::optional<LambdaPath> path;
    std::optional<MainEffectModel> main_effect;
    std::vector<std::string> warnings;
};

inline LossKind loss_for(Family family, BinaryLink link) {
    switch (family) {
        case Family::gaussian: return LossKind::gaussian;
        case Family::binomial: return link == BinaryLink::relative_risk ? LossKind::relative_risk : LossKind::logistic;
        case Family::cox: return LossKind::cox;
    }
    return LossKind::gaussian;
}

/// Response part of a problem (y or time/status) copied from a dataset.
inline void set_response(Problem& pr, const Dataset& d) {
    if (d.family == Family::cox) {
        pr.time = d.time;
        pr.status = d.status;
    } else {
        pr.y = d.y;
    }
    pr.strata = d.treatment;
}

/// Design of the full-regression comparator: [W, W T] for gaussian and
/// binomial (intercept exempt from the penalty), [Z, T, Z T] for cox. The
/// trailing p columns are always the treatment-interaction block in W order.
inline Matrix full_regression_design(const Matrix& w, const Vector& t, Family family) {
    const Index n = w.rows(), p = w.cols();
    Matrix wt = w.array().colwise() * t.array();
    if (family == Family::cox) {
        Matrix x(n, 2 * p - 1);
        x.leftCols(p - 1) = w.rightCols(p - 1);
        x.rightCols(p) = wt;
        return x;
    }
    Matrix x(n, 2 * p);
    x.leftCols(p) = w;
    x.rightCols(p) = wt;
    return x;
}

namespace detail {

inline FitResult select_fit(const Problem& pr, const PenaltySpec& pen, const FitOptions& opt, FitReport& rep,
                            std::uint64_t cv_stream) {
    if (opt.lambda) {
        FitResult r = fit(pr, pen.with_lambda(*opt.lambda), opt.solver);
        return r;
    }
    LambdaGrid grid = lambda_grid(pr, pen, opt.n_lambda, opt.lambda_ratio, opt.solver);
    for (auto& w : grid.warnings) rep.warnings.push_back(w);
    CvOptions cv;
    cv.folds = opt.folds;
    cv.seed = derive_seed(opt.seed, cv_stream);
    cv.one_se = opt.one_se;
    cv.solver = opt.solver;
    LambdaPath path = cross_validate(pr, pen, grid.lambdas, cv);
    for (auto& w : path.warnings) rep.warnings.push_back(w);
    FitResult r = path.selected_fit();
    rep.path = std::move(path);
    return r;
}

}  // namespace detail

/// Fits one of the three interaction estimators on a dataset.
inline FitReport fit_model(const Dataset& d, const FitOptions& opt) {
    check_dataset(d);
    FitReport rep;
    ModifiedDesign design = make_modified_design(d, opt.basis);
    for (auto& w : design.basis.warnings) rep.warnings.push_back(w);
    const Index p = design.w.cols();

    InteractionModel& m = rep.model;
    m.family = d.family;
    m.link = opt.link;
    m.method = opt.method;
    m.basis = design.basis;

    std::vector<std::string> wnames{"(intercept)"};
    for (const auto& nm : design.basis.names) wnames.push_back(nm);

    Problem pr;
    set_response(pr, d);
    PenaltySpec pen;

    if (opt.method == Method::full_regression) {
        if (d.family == Family::binomial && opt.link == BinaryLink::relative_risk)
            fail(ErrorKind::unsupported, "full regression is only defined for the risk-difference (logistic) link");
        pr.kind = loss_for(d.family, BinaryLink::risk_difference);
        pr.x = full_regression_design(design.w, d.treatment, d.family);
        pen.exempt_first = d.family != Family::cox;
        if (opt.adaptive != AdaptiveMode::none)
            rep.warnings.push_back("adaptive weights are not applied to the full-regression comparator");
        rep.fit = detail::select_fit(pr, pen, opt, rep, stream::cv_interaction);
        const Vector& c = rep.fit.gamma;
        m.gamma = 2.0 * c.tail(p);
        m.raw_coefficients = c;
        if (d.family == Family::cox) {
            for (size_t j = 1; j < wnames.size(); ++j) m.raw_names.push_back(wnames[j]);
        } else {
            m.raw_names = wnames;
        }
        for (const auto& nm : wnames) m.raw_names.push_back("trt:" + nm);
        m.exempt_first = pen.exempt_first;
        m.multipliers = Vector::Ones(pr.p());
    } else {
        pr.kind = loss_for(d.family, opt.link);
        pr.x = design.wstar;
        AdaptiveWeights aw = adaptive_weights(d, design.w, opt.adaptive, opt.weight_convention);
        for (auto& w : aw.warnings) rep.warnings.push_back(w);
        pen.multipliers = aw.multipliers;
        pen.exempt_first = opt.exempt_first;

        if (opt.method == Method::augmented) {
            MainEffectOptions mo;
            mo.folds = opt.folds;
            mo.seed = derive_seed(opt.seed, stream::cv_main_effect);
            mo.tau = opt.tau;
            mo.basis = opt.basis;
            mo.n_lambda = opt.n_lambda;
            mo.lambda_ratio = opt.lambda_ratio;
            mo.solver = opt.solver;
            AugmentationPlan plan;
            if (d.family == Family::cox) {
                auto mr = martingale_residuals(d.time, d.status, opt.tau);
                rep.main_effect = estimate_main_effect(d, mr, mo);
                plan = augmentation_survival(design.w, mr, *rep.main_effect);
            } else {
                rep.main_effect = estimate_main_effect(d, mo);
                plan = d.family == Family::gaussian ? augmentation_continuous(design.w, *rep.main_effect)
                                                    : augmentation_binary(design.w, *rep.main_effect);
            }
            pr.aug = plan.signed_rows(d.treatment);
        }
        rep.fit = detail::select_fit(pr, pen, opt, rep, stream::cv_interaction);
        m.gamma = rep.fit.gamma;
        m.raw_coefficients = rep.fit.gamma;
        m.raw_names = wnames;
        m.exempt_first = opt.exempt_first;
        m.multipliers = pen.effective(p);
    }
    m.lambda = rep.fit.lambda;
    for (auto& w : rep.fit.warnings) rep.warnings.push_back(w);
    return rep;
}

}  // namespace modcov
