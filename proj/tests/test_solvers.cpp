#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "modcov/solvers/adaptive_weights.hpp"
#include "modcov/solvers/lambda_path.hpp"
#include "oracles.hpp"

using namespace modcov;

namespace {

using oracle::golden_min;
using oracle::randn;
using oracle::random_problem;

// Brute-force objectives written out directly from their definitions.

double logistic_obj(const Vector& x, const Vector& y, const Vector& c, double lambda, double g) {
    double s = 0;
    for (Index i = 0; i < x.size(); ++i) {
        double eta = g * x[i];
        s += std::log1p(std::exp(eta)) - y[i] * eta - (c.size() ? c[i] * eta : 0.0);
    }
    return s / x.size() + lambda * std::abs(g);
}

double rr_obj(const Vector& x, const Vector& y, const Vector& c, double lambda, double g) {
    double s = 0;
    for (Index i = 0; i < x.size(); ++i) {
        double eta = g * x[i];
        s += (1 - y[i]) * eta + y[i] * std::exp(-eta) - (c.size() ? c[i] * eta : 0.0);
    }
    return s / x.size() + lambda * std::abs(g);
}

double cox_obj(const Matrix& x, const Vector& t, const Vector& d, const Vector& g) {
    Vector eta = x * g;
    double s = 0;
    for (Index i = 0; i < t.size(); ++i) {
        if (d[i] == 0) continue;
        double r = 0;
        for (Index j = 0; j < t.size(); ++j)
            if (t[j] >= t[i]) r += std::exp(eta[j]);
        s += std::log(r) - eta[i];
    }
    return s / t.size();
}

double gaussian_obj(const Matrix& x, const Vector& y, double lambda, const Vector& g) {
    return 0.5 * (y - x * g).squaredNorm() / y.size() + lambda * g.lpNorm<1>();
}

double central_diff(const Problem& pr, Vector g, Index j, double h) {
    g[j] += h;
    double up = oracle::objective(pr, g);
    g[j] -= 2 * h;
    double dn = oracle::objective(pr, g);
    return (up - dn) / (2 * h);
}

void expect_kkt(const Problem& pr, const FitResult& r, const PenaltySpec& pen) {
    ASSERT_TRUE(r.converged);
    Vector g = smooth_gradient(pr, r.gamma);
    Vector mu = pen.effective(pr.p());
    for (Index j = 0; j < pr.p(); ++j) {
        const double thr = pen.lambda * mu[j];
        if (r.gamma[j] == 0)
            EXPECT_LE(std::abs(g[j]), thr + 1e-6) << "coordinate " << j;
        else
            EXPECT_LE(std::abs(g[j] + thr * (r.gamma[j] > 0 ? 1 : -1)), 1e-6) << "coordinate " << j;
    }
}

Matrix col(std::initializer_list<double> v) {
    Matrix m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST(GaussianLasso, SoftThresholdExamples) {
    Matrix x = col({1, -1});
    Vector y = vec({1, -1});
    EXPECT_NEAR(fit_gaussian_lasso(x, y, std::nullopt, {0.0}).gamma[0], 1.0, 1e-12);
    EXPECT_NEAR(fit_gaussian_lasso(x, y, std::nullopt, {0.4}).gamma[0], 0.6, 1e-12);
    EXPECT_EQ(fit_gaussian_lasso(x, y, std::nullopt, {1.5}).gamma[0], 0.0);
    double g = golden_min([&](double b) { return gaussian_obj(x, y, 0.4, vec({b})); }, -5, 5);
    EXPECT_NEAR(g, 0.6, 1e-8);
}

TEST(GaussianLasso, OffsetShiftsResponse) {
    std::mt19937_64 rng(1);
    Matrix x = randn(rng, 30, 3);
    Vector y = randn(rng, 30, 1).col(0), off = randn(rng, 30, 1).col(0);
    Vector a = fit_gaussian_lasso(x, y, off, {0.05}).gamma;
    Vector b = fit_gaussian_lasso(x, y - off, std::nullopt, {0.05}).gamma;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GaussianLasso, RejectsBadInput) {
    Matrix x = col({1, -1});
    EXPECT_THROW(fit_gaussian_lasso(x, vec({1, 2}), std::nullopt, {-1.0}), Error);
    EXPECT_THROW(fit_gaussian_lasso(x, vec({1, 2, 3}), std::nullopt, {0.1}), Error);
}

TEST(LogisticLasso, Examples) {
    Matrix x = col({1, 1, -1, -1});
    Vector y = vec({1, 1, 0, 0});
    EXPECT_EQ(fit_logistic_lasso(x, y, std::nullopt, {10.0}).gamma[0], 0.0);
    FitResult indep = fit_logistic_lasso(x, vec({0, 1, 0, 1}), std::nullopt, {0.0});
    EXPECT_TRUE(indep.converged);
    EXPECT_NEAR(indep.gamma[0], 0.0, 1e-12);
    EXPECT_THROW(fit_logistic_lasso(x, vec({0, 2, 0, 1}), std::nullopt, {0.0}), Error);
    EXPECT_THROW(fit_logistic_lasso(x, vec({1, 1, 1, 1}), std::nullopt, {0.0}), Error);
}

TEST(LogisticLasso, SixPointGoldenSectionOracle) {
    Matrix x = col({0.3, -1.2, 0.8, 1.9, -0.4, -2.2});
    Vector y = vec({1, 0, 0, 1, 1, 0});
    FitResult r = fit_logistic_lasso(x, y, std::nullopt, {0.05});
    double g = golden_min([&](double b) { return logistic_obj(x.col(0), y, Vector(), 0.05, b); }, -20, 20);
    EXPECT_NEAR(r.gamma[0], g, 1e-5);

    Vector c = vec({0.1, -0.2, 0.05, 0.3, -0.1, 0.0});
    FitResult ra = fit_logistic_lasso(x, y, c, {0.05});
    double ga = golden_min([&](double b) { return logistic_obj(x.col(0), y, c, 0.05, b); }, -20, 20);
    EXPECT_NEAR(ra.gamma[0], ga, 1e-5);
}

TEST(RelativeRisk, Examples) {
    Matrix x = col({1, -1, 1, -1});
    FitResult all1 = fit_relative_risk(x, vec({1, 1, 1, 1}), std::nullopt, {0.0});
    EXPECT_TRUE(all1.converged);
    EXPECT_NEAR(all1.gamma[0], 0.0, 1e-10);
    Vector y = vec({1, 0, 0, 1});
    Problem pr;
    pr.kind = LossKind::relative_risk;
    pr.x = x;
    pr.y = y;
    double lmax = lambda_grid(pr, {}).lambda_max;
    EXPECT_EQ(fit_relative_risk(x, y, std::nullopt, {lmax}).gamma[0], 0.0);
}

TEST(RelativeRisk, EightPointGoldenSectionOracle) {
    Matrix x = col({0.7, -0.3, 1.4, -1.1, 0.2, -0.9, 2.0, -1.6});
    Vector y = vec({1, 0, 1, 1, 0, 0, 1, 0});
    FitResult r = fit_relative_risk(x, y, std::nullopt, {0.1});
    double g = golden_min([&](double b) { return rr_obj(x.col(0), y, Vector(), 0.1, b); }, -20, 20);
    EXPECT_NEAR(r.gamma[0], g, 1e-5);
    EXPECT_NE(g, 0.0);

    Vector c = vec({-0.1, 0.2, -0.05, 0.1, 0.0, 0.15, -0.2, 0.05});
    FitResult ra = fit_relative_risk(x, y, c, {0.1});
    double ga = golden_min([&](double b) { return rr_obj(x.col(0), y, c, 0.1, b); }, -20, 20);
    EXPECT_NEAR(ra.gamma[0], ga, 1e-5);
}

TEST(CoxLasso, FiveSubjectGridOracle) {
    Matrix x = col({0.5, -1.0, 1.5, 0.2, -0.3});
    Vector t = vec({2.0, 1.5, 1.0, 3.0, 4.0});
    Vector d = vec({1, 1, 1, 0, 1});
    FitResult r = fit_cox_lasso(x, t, d, std::nullopt, {0.0});
    ASSERT_TRUE(r.converged);
    double g = golden_min([&](double b) { return cox_obj(x, t, d, vec({b})); }, -20, 20);
    EXPECT_NEAR(r.gamma[0], g, 1e-5);
}

TEST(CoxLasso, TiesUseBreslow) {
    Matrix x = col({0.5, -1.0, 1.5, 0.2, -0.3, 0.9});
    Vector t = vec({2, 2, 1, 3, 3, 3});
    Vector d = vec({1, 1, 1, 0, 1, 1});
    FitResult r = fit_cox_lasso(x, t, d, std::nullopt, {0.01});
    double g = golden_min([&](double b) { return cox_obj(x, t, d, vec({b})) + 0.01 * std::abs(b); }, -20, 20);
    EXPECT_NEAR(r.gamma[0], g, 1e-5);
}

TEST(CoxLasso, ConstantColumnAndSignEquivariance) {
    std::mt19937_64 rng(7);
    Problem pr = random_problem(LossKind::cox, rng, 40, 3);
    pr.x.col(1).setConstant(2.5);
    FitResult r = fit(pr, {0.01});
    EXPECT_EQ(r.gamma[1], 0.0);
    pr.x.col(0) = -pr.x.col(0);
    FitResult neg = fit(pr, {0.01});
    EXPECT_NEAR(neg.gamma[0], -r.gamma[0], 1e-7);
    EXPECT_NEAR(neg.gamma[2], r.gamma[2], 1e-7);
}

TEST(RelativeRisk, SeparatedDataReportsDivergence) {
    FitResult r = fit_relative_risk(col({1, -1, 2, -2}), vec({1, 0, 1, 0}), std::nullopt, {0.0});
    EXPECT_FALSE(r.converged);
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings[0].find("divergence"), std::string::npos);
    EXPECT_THROW(fit_relative_risk(col({1, -1}), vec({0, 0}), std::nullopt, {0.1}), Error);
}

TEST(CoxLasso, RejectsNoEvents) {
    EXPECT_THROW(fit_cox_lasso(col({1, 2}), vec({1, 2}), vec({0, 0}), std::nullopt, {0.1}), Error);
}

TEST(Gradients, MatchCentralDifferences) {
    std::mt19937_64 rng(42);
    for (LossKind kind : {LossKind::logistic, LossKind::relative_risk, LossKind::cox}) {
        for (int rep = 0; rep < 5; ++rep) {
            Problem pr = random_problem(kind, rng, 25, 4, rep % 2 == 1);
            Vector g = randn(rng, 4, 1).col(0) * 0.5;
            Vector an = smooth_gradient(pr, g);
            for (Index j = 0; j < 4; ++j) {
                double fd = central_diff(pr, g, j, 1e-5);
                EXPECT_LT(std::abs(an[j] - fd) / std::max(std::abs(an[j]), 1e-3), 1e-5)
                    << to_string(kind) << " rep " << rep << " coord " << j;
            }
        }
    }
}

TEST(Kkt, HoldsAlongPaths) {
    std::mt19937_64 rng(9);
    for (LossKind kind : {LossKind::gaussian, LossKind::logistic, LossKind::relative_risk, LossKind::cox}) {
        for (Index p : {5, 60}) {
            Problem pr = random_problem(kind, rng, 50, p, p == 5);
            PenaltySpec pen;
            pen.exempt_first = p == 5;
            auto grid = lambda_grid(pr, pen, 20, 0.01).lambdas;
            for (const auto& r : fit_path(pr, pen, grid)) {
                SCOPED_TRACE(to_string(kind) + " p=" + std::to_string(p) + " lambda=" + std::to_string(r.lambda));
                if (!r.converged && kind == LossKind::relative_risk && p > 50) {
                    // separated data: the objective is linear in the y = 0 subjects
                    ASSERT_FALSE(r.warnings.empty());
                    EXPECT_NE(r.warnings[0].find("divergence"), std::string::npos);
                    continue;
                }
                expect_kkt(pr, r, pen.with_lambda(r.lambda));
                EXPECT_LE(r.kkt_residual, 1e-6);
            }
        }
    }
}

TEST(Kkt, WeightedPenalty) {
    std::mt19937_64 rng(10);
    Problem pr = random_problem(LossKind::gaussian, rng, 40, 6);
    PenaltySpec pen{0.05, vec({1, 0.001, 1000, 2, 0.5, 0})};
    FitResult r = fit(pr, pen);
    expect_kkt(pr, r, pen);
    EXPECT_EQ(r.gamma[2], 0.0);
}

TEST(GridOracle, TwoDimensional) {
    std::mt19937_64 rng(3);
    for (LossKind kind : {LossKind::gaussian, LossKind::logistic, LossKind::relative_risk, LossKind::cox}) {
        Problem pr = random_problem(kind, rng, 30, 2);
        const double lambda = 0.03;
        FitResult r = fit(pr, {lambda});
        Vector best = oracle::grid_minimizer(pr, lambda);
        EXPECT_NEAR(r.gamma[0], best[0], 2e-3) << to_string(kind);
        EXPECT_NEAR(r.gamma[1], best[1], 2e-3) << to_string(kind);
    }
}

TEST(Permutation, FitsUnchanged) {
    std::mt19937_64 rng(21);
    for (LossKind kind : {LossKind::gaussian, LossKind::logistic, LossKind::relative_risk, LossKind::cox}) {
        Problem pr = random_problem(kind, rng, 40, 5, true);
        std::vector<Index> perm(40);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Problem sh = subset(pr, perm);
        Vector a = fit(pr, {0.02}).gamma, b = fit(sh, {0.02}).gamma;
        EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6) << to_string(kind);
    }
}

TEST(LambdaGrid, LambdaMaxExample) {
    Problem pr;
    pr.x = col({1, -1});
    pr.y = vec({1, -1});
    LambdaGrid g = lambda_grid(pr, {});
    EXPECT_NEAR(g.lambda_max, 1.0, 1e-12);
    ASSERT_EQ(g.lambdas.size(), 100u);
    EXPECT_NEAR(g.lambdas.back(), 1e-3, 1e-15);
    for (size_t k = 1; k < g.lambdas.size(); ++k) EXPECT_LT(g.lambdas[k], g.lambdas[k - 1]);
    EXPECT_EQ(fit(pr, {1.0 + 1e-9}).gamma[0], 0.0);
    EXPECT_GT(fit(pr, {1.0 - 1e-6}).gamma[0], 0.0);
}

TEST(LambdaGrid, ConstantOutcomeGivesZeroGrid) {
    Problem pr;
    pr.x = col({1, -1, 1, -1});
    pr.y = vec({2, 2, 2, 2});
    LambdaGrid g = lambda_grid(pr, {});
    EXPECT_EQ(g.lambdas, std::vector<double>{0.0});
    EXPECT_FALSE(g.warnings.empty());
}

TEST(LambdaGrid, ExemptColumnIgnored) {
    Problem pr;
    pr.x.resize(4, 2);
    pr.x << 1, 1, 1, -1, 1, 1, 1, -1;
    pr.y = vec({5, 1, 5, 3});
    PenaltySpec pen;
    pen.exempt_first = true;
    LambdaGrid g = lambda_grid(pr, pen);
    // intercept fitted to ybar = 3.5, residuals (1.5,-2.5,1.5,-0.5) against (1,-1,1,-1)
    EXPECT_NEAR(g.lambda_max, 1.5, 1e-9);
    FitResult at = fit(pr, pen.with_lambda(g.lambda_max * (1 + 1e-9)));
    EXPECT_EQ(at.gamma[1], 0.0);
    EXPECT_NEAR(at.gamma[0], 3.5, 1e-9);
}

TEST(CrossValidate, DeterministicGivenSeed) {
    std::mt19937_64 rng(5);
    Problem pr = random_problem(LossKind::logistic, rng, 80, 6, true);
    pr.strata = Vector(80);
    for (Index i = 0; i < 80; ++i) pr.strata[i] = i % 2 ? 1 : -1;
    auto grid = lambda_grid(pr, {}, 15, 0.01).lambdas;
    CvOptions opt;
    opt.folds = 10;
    opt.seed = 77;
    LambdaPath a = cross_validate(pr, {}, grid, opt), b = cross_validate(pr, {}, grid, opt);
    EXPECT_EQ(a.fold_of, b.fold_of);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_EQ(a.cv_mean, b.cv_mean);
    opt.seed = 78;
    EXPECT_NE(cross_validate(pr, {}, grid, opt).fold_of, a.fold_of);
}

TEST(CrossValidate, FoldsStratifiedAndBalanced) {
    std::mt19937_64 rng(6);
    Problem pr = random_problem(LossKind::cox, rng, 100, 3);
    pr.strata = Vector(100);
    for (Index i = 0; i < 100; ++i) pr.strata[i] = i < 37 ? 1 : -1;
    auto folds = assign_folds(pr, 20, 1);
    std::vector<int> size(20, 0);
    for (int f : folds) ++size[static_cast<size_t>(f)];
    EXPECT_LE(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()), 1);
}

TEST(CrossValidate, SinglePointGrid) {
    std::mt19937_64 rng(8);
    Problem pr = random_problem(LossKind::gaussian, rng, 30, 3);
    CvOptions opt;
    opt.folds = 5;
    LambdaPath path = cross_validate(pr, {}, {0.1}, opt);
    EXPECT_EQ(path.selected_lambda, 0.1);
}

TEST(CrossValidate, IdenticalRowsMatchTrainingLossAtLambdaMax) {
    Problem pr;
    pr.x = Matrix(20, 2);
    pr.x.col(0).setConstant(1.0);
    pr.x.col(1).setConstant(-2.0);
    pr.y = Vector::Constant(20, 3.0);
    LambdaGrid g = lambda_grid(pr, {}, 5, 0.1);
    CvOptions opt;
    opt.folds = 4;
    LambdaPath path = cross_validate(pr, {}, g.lambdas, opt);
    EXPECT_NEAR(path.cv_mean[0], path.train_loss[0], 1e-9);
}

TEST(CrossValidate, MoreFoldsThanSubjectsClamps) {
    std::mt19937_64 rng(12);
    Problem pr = random_problem(LossKind::gaussian, rng, 8, 2);
    CvOptions opt;
    opt.folds = 20;
    LambdaPath path = cross_validate(pr, {}, {0.5, 0.1}, opt);
    EXPECT_FALSE(path.warnings.empty());
}

TEST(AdaptiveWeights, ReciprocalAndClip) {
    Vector mu = weights_from_strengths(vec({2, 0.5}));
    EXPECT_DOUBLE_EQ(mu[0], 0.5);
    EXPECT_DOUBLE_EQ(mu[1], 2.0);
    EXPECT_EQ(weights_from_strengths(vec({0}))[0], 1e3);
    EXPECT_EQ(weights_from_strengths(vec({0}), WeightConvention::as_written)[0], 1e-3);
    Vector eq = weights_from_strengths(vec({0.7, 0.7, 0.7}));
    EXPECT_EQ(eq[0], eq[1]);
    EXPECT_EQ(eq[1], eq[2]);
}

TEST(AdaptiveWeights, EqualMultipliersRescaleLambda) {
    std::mt19937_64 rng(13);
    Problem pr = random_problem(LossKind::logistic, rng, 60, 4);
    Vector a = fit(pr, {0.02, Vector::Constant(4, 2.0)}).gamma;
    Vector b = fit(pr, {0.04}).gamma;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AdaptiveWeights, StrongMainEffectGetsLighterPenalty) {
    std::mt19937_64 rng(14);
    Dataset d;
    d.family = Family::gaussian;
    const Index n = 200;
    d.z = randn(rng, n, 2);
    d.y = 3.0 * d.z.col(0) + 0.1 * randn(rng, n, 1).col(0);
    d.treatment = Vector(n);
    for (Index i = 0; i < n; ++i) d.treatment[i] = i % 2 ? 1 : -1;
    Matrix w(n, 3);
    w.col(0).setOnes();
    w.rightCols(2) = d.z;
    for (AdaptiveMode mode : {AdaptiveMode::pooled, AdaptiveMode::armwise}) {
        AdaptiveWeights aw = adaptive_weights(d, w, mode);
        EXPECT_EQ(aw.multipliers[0], 1.0);
        EXPECT_LT(aw.multipliers[1], aw.multipliers[2]);
    }
}
