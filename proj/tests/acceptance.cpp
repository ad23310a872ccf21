// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "modcov/modcov.hpp"
#include "oracles.hpp"

using namespace modcov;

namespace {

constexpr std::uint64_t kMasterSeed = 12345;

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

// 1 -------------------------------------------------------------------------

Outcome modified_outcome_identity() {
    std::mt19937_64 rng(1);
    SolverOptions so;
    so.tol = 1e-13;
    double worst = 0, worst_ols = 0;
    for (int rep = 0; rep < 50; ++rep) {
        Matrix z = oracle::randn(rng, 40, 5);
        Vector t(40), y(40);
        std::normal_distribution<double> nd;
        for (Index i = 0; i < 40; ++i) {
            t[i] = rng() % 2 ? 1.0 : -1.0;
            y[i] = z(i, 0) - 0.5 * z(i, 2) + t[i] * (0.7 * z(i, 1)) + nd(rng);
        }
        t[0] = 1, t[1] = -1;
        auto [w, spec] = build_basis(z);
        FitResult a = fit_gaussian_lasso(modify_covariates(w, t), y, std::nullopt, {0.0}, so);
        FitResult b = fit_gaussian_lasso(w, modified_outcome(y, t), std::nullopt, {0.0}, so);
        if (!a.converged || !b.converged) return {false, "fit did not converge in rep " + std::to_string(rep)};
        worst = std::max(worst, (a.gamma - b.gamma).cwiseAbs().maxCoeff());
        Vector ols = w.colPivHouseholderQr().solve(modified_outcome(y, t));
        worst_ols = std::max(worst_ols, (a.gamma - ols).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-8 && worst_ols < 1e-8,
            "max |modified covariate - modified outcome| = " + fmt(worst) + ", vs QR least squares " + fmt(worst_ols)};
}

// 2 -------------------------------------------------------------------------

Outcome residualized_outcome_identity() {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    double worst = 0;
    for (int rep = 0; rep < 20; ++rep) {
        Dataset d;
        d.family = Family::gaussian;
        d.z = oracle::randn(rng, 60, 6);
        d.treatment.resize(60);
        d.y.resize(60);
        for (Index i = 0; i < 60; ++i) {
            d.treatment[i] = i % 2 ? 1 : -1;
            d.y[i] = 1.5 * d.z(i, 3) - d.z(i, 4) + d.treatment[i] * 0.5 * d.z(i, 0) + nd(rng);
        }
        ModifiedDesign design = make_modified_design(d);
        MainEffectOptions mo;
        mo.folds = 5;
        mo.seed = static_cast<std::uint64_t>(rep);
        MainEffectModel main = estimate_main_effect(d, mo);
        AugmentationPlan plan = augmentation_continuous(design.w, main);

        Problem aug;
        aug.x = design.wstar;
        aug.y = d.y;
        aug.aug = plan.signed_rows(d.treatment);
        Problem plain;
        plain.x = design.wstar;
        plain.y = d.y - main.fitted;
        auto grid = lambda_grid(plain, {}, 50, 1e-3).lambdas;
        auto pa = fit_path(aug, {}, grid), pb = fit_path(plain, {}, grid);
        for (size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, (pa[k].gamma - pb[k].gamma).cwiseAbs().maxCoeff());
    }
    return {worst < 1e-6, "max per-lambda coefficient difference " + fmt(worst)};
}

// 3 -------------------------------------------------------------------------

// Three support points, P(Z = z_k) = 1/3, treatment +-1 with probability 1/2.
// The objective separates over support points, so for each point the
// population minimizer f(z) of E[loss(T f(Z))] is found by golden section,
// compared with its closed form, and compared with an unpenalized fit on a
// replicated data set whose cell frequencies equal the probabilities.
Outcome population_oracles(std::string& note) {
    const double zs[3] = {-1.0, 0.0, 2.0};
    const double mu1[3] = {0.5, 2.0, -1.0}, mu0[3] = {1.5, 0.0, 3.0};  // continuous means by arm
    const double m1[3] = {0.35, 0.6, 0.85}, m0[3] = {0.75, 0.6, 0.25};  // binary P(Y = 1) by arm
    const int reps = 20;  // replicated rows per (z, arm) cell; probabilities are multiples of 1/20

    double worst = 0;
    std::ostringstream os;
    SolverOptions so;
    so.tol = 1e-12;

    // saturated basis (1, I(z = z_2), I(z = z_3)) so every f(z) is free
    auto basis = [&](int k) {
        Vector w = Vector::Zero(3);
        w[0] = 1;
        if (k > 0) w[k] = 1;
        return w;
    };
    auto cell_design = [&](const std::function<void(int, double, int, Matrix&, Vector&, Index)>& fill, Matrix& x,
                           Vector& y) {
        x.resize(3 * 2 * reps, 3);
        y.resize(3 * 2 * reps);
        Index row = 0;
        for (int k = 0; k < 3; ++k)
            for (double t : {1.0, -1.0})
                for (int r = 0; r < reps; ++r, ++row) {
                    x.row(row) = basis(k).transpose() * (t / 2);
                    fill(k, t, r, x, y, row);
                }
    };
    auto f_of = [&](const Vector& gamma, int k) { return basis(k).dot(gamma) / 2; };

    // continuous: E[(Y - T f)^2 | z] with Y | T ~ mean mu_T(z); f* = Delta(z) / 2
    {
        Matrix x;
        Vector y;
        cell_design([&](int k, double t, int r, Matrix&, Vector& yy, Index row) {
            yy[row] = (t > 0 ? mu1[k] : mu0[k]) + (r % 2 ? 1.0 : -1.0);
        }, x, y);
        Vector g = fit_gaussian_lasso(x, y, std::nullopt, {0.0}, so).gamma;
        for (int k = 0; k < 3; ++k) {
            auto pop = [&](double f) {
                return 0.5 * (std::pow(mu1[k] - f, 2) + 1) + 0.5 * (std::pow(mu0[k] + f, 2) + 1);
            };
            const double num = oracle::golden_min(pop, -20, 20, 1e-12), closed = (mu1[k] - mu0[k]) / 2;
            worst = std::max({worst, std::abs(num - closed), std::abs(f_of(g, k) - closed)});
        }
    }

    // binary, logistic loss: closed form f* = log((1 + Delta) / (1 - Delta)),
    // equivalently Delta = (e^f - 1) / (e^f + 1), the score transform with s = 2 f
    {
        Matrix x;
        Vector y;
        cell_design([&](int k, double t, int r, Matrix&, Vector& yy, Index row) {
            yy[row] = r < std::lround((t > 0 ? m1[k] : m0[k]) * reps) ? 1.0 : 0.0;
        }, x, y);
        Vector g = fit_logistic_lasso(x, y, std::nullopt, {0.0}, so).gamma;
        double sign_check = 0;
        for (int k = 0; k < 3; ++k) {
            const double delta = m1[k] - m0[k];
            auto pop = [&](double f) {
                return 0.5 * (std::log1p(std::exp(f)) - m1[k] * f) + 0.5 * (std::log1p(std::exp(-f)) + m0[k] * f);
            };
            const double num = oracle::golden_min(pop, -20, 20, 1e-12);
            const double closed = std::log((1 + delta) / (1 - delta));
            worst = std::max({worst, std::abs(num - closed), std::abs(f_of(g, k) - closed),
                              std::abs(risk_difference_of_score(2 * num) - delta)});
            sign_check += num * delta;
        }
        os << "binary minimizer has the sign of Delta (" << (sign_check > 0 ? "+" : "-")
           << "log((1+Delta)/(1-Delta))); ";
    }

    // relative risk: (1 - y) eta + y e^{-eta}; f* = log(m_1 / m_-1)
    {
        Matrix x;
        Vector y;
        cell_design([&](int k, double t, int r, Matrix&, Vector& yy, Index row) {
            yy[row] = r < std::lround((t > 0 ? m1[k] : m0[k]) * reps) ? 1.0 : 0.0;
        }, x, y);
        Vector g = fit_relative_risk(x, y, std::nullopt, {0.0}, so).gamma;
        for (int k = 0; k < 3; ++k) {
            auto pop = [&](double f) {
                return 0.5 * ((1 - m1[k]) * f + m1[k] * std::exp(-f)) + 0.5 * (-(1 - m0[k]) * f + m0[k] * std::exp(f));
            };
            const double num = oracle::golden_min(pop, -20, 20, 1e-12), closed = std::log(m1[k] / m0[k]);
            worst = std::max({worst, std::abs(num - closed), std::abs(f_of(g, k) - closed),
                              std::abs(relative_risk_of_score(2 * num) - m1[k] / m0[k])});
        }
    }
    (void)zs;
    note = os.str();
    return {worst < 1e-6, note + "max deviation " + fmt(worst)};
}

// 4 -------------------------------------------------------------------------

Outcome solver_correctness() {
    std::mt19937_64 rng(4);
    double worst_kkt = 0, worst_grid = 0, worst_grad = 0;
    int fits = 0, skipped = 0;
    const LossKind kinds[] = {LossKind::gaussian, LossKind::logistic, LossKind::relative_risk, LossKind::cox};
    for (LossKind kind : kinds)
        for (Index p : {5, 40})
            for (bool aug : {false, true}) {
                Problem pr = oracle::random_problem(kind, rng, 60, p, aug);
                PenaltySpec pen;
                pen.exempt_first = aug;
                auto grid = lambda_grid(pr, pen, 20, 1e-2).lambdas;
                for (const auto& r : fit_path(pr, pen, grid)) {
                    if (!r.converged) {
                        ++skipped;
                        continue;
                    }
                    ++fits;
                    worst_kkt = std::max(worst_kkt, kkt_residual(pr, r.gamma, pen.with_lambda(r.lambda)));
                }
            }
    for (LossKind kind : kinds)
        for (int rep = 0; rep < 2; ++rep) {
            Problem pr = oracle::random_problem(kind, rng, 30, 2, rep == 1);
            const double lambda = 0.03;
            FitResult r = fit(pr, {lambda});
            worst_grid = std::max(worst_grid, (r.gamma - oracle::grid_minimizer(pr, lambda)).cwiseAbs().maxCoeff());
        }
    for (LossKind kind : {LossKind::logistic, LossKind::relative_risk, LossKind::cox})
        for (int rep = 0; rep < 10; ++rep) {
            Problem pr = oracle::random_problem(kind, rng, 30, 4, rep % 2 == 1);
            Vector g = oracle::randn(rng, 4, 1).col(0) * 0.5;
            Vector an = smooth_gradient(pr, g);
            for (Index j = 0; j < 4; ++j) {
                Vector up = g, dn = g;
                up[j] += 1e-5;
                dn[j] -= 1e-5;
                const double fd = (oracle::objective(pr, up) - oracle::objective(pr, dn)) / 2e-5;
                worst_grad = std::max(worst_grad, std::abs(an[j] - fd) / std::max(std::abs(an[j]), 1e-3));
            }
        }
    return {worst_kkt <= 1e-6 && worst_grid <= 2e-3 && worst_grad < 1e-5,
            std::to_string(fits) + " converged fits, max KKT residual " + fmt(worst_kkt) + " (" +
                std::to_string(skipped) + " diverged fits excluded); grid oracle " + fmt(worst_grid) +
                "; gradient rel. error " + fmt(worst_grad)};
}

// 5 -------------------------------------------------------------------------

Outcome martingale_residual_checks() {
    auto hand = martingale_residuals((Vector(2) << 1, 2).finished(), (Vector(2) << 1, 1).finished(), 2.0);
    const bool exact = hand.values[0] == 0.5 && hand.values[1] == -0.5;
    std::mt19937_64 rng(5);
    std::exponential_distribution<double> ex;
    std::uniform_real_distribution<double> u;
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const Index n = 10 + rep;
        Vector t(n), s(n);
        for (Index i = 0; i < n; ++i) {
            const double e = ex(rng), c = 2 * u(rng);
            t[i] = rep % 3 == 0 ? std::ceil(std::min(e, c) * 4) / 4 : std::min(e, c);
            s[i] = e <= c;
        }
        s[0] = 1;
        worst = std::max(worst, std::abs(martingale_residuals(t, s).values.sum()));
    }
    return {exact && worst < 1e-10, std::string("hand example ") + (exact ? "exact" : "WRONG") +
                                        ", max |sum of residuals| " + fmt(worst)};
}

// 6 -------------------------------------------------------------------------

Outcome censoring_calibration() {
    Outcome out;
    for (int id = 1; id <= 4; ++id) {
        SimulationSetting s = SimulationSetting::standard(id, Family::cox);
        const double xi = calibrate_censoring(s, 0.25, derive_seed(kMasterSeed + id, stream::censoring));
        const double rate = censoring_rate(gen_survival(s, 10000, derive_seed(kMasterSeed + id, stream::test), xi));
        out.pass = out.pass && std::abs(rate - 0.25) <= 0.02;
        out.detail += "setting " + std::to_string(id) + ": " + fmt(rate, 4) + (id < 4 ? ", " : "");
    }
    return out;
}

// 7-9 -----------------------------------------------------------------------

struct Medians {
    std::map<Method, double> median;
    std::string text;
};

Medians run_setting(int id, Family family, const std::vector<Method>& methods) {
    SimulationSetting s = SimulationSetting::standard(id, family, 50);
    ExperimentResult r = run_experiment(s, methods, 100, kMasterSeed);
    Medians m;
    for (const auto& mr : r.methods) {
        Quartiles q = quartiles(mr.spearman);
        m.median[mr.method] = q.median;
        m.text += to_string(mr.method) + " " + fmt(q.median) + " [" + fmt(q.q1) + ", " + fmt(q.q3) + "] n=" +
                  std::to_string(q.count) + "; ";
    }
    return m;
}

Outcome ordering_setting1() {
    Medians m = run_setting(1, Family::gaussian, {Method::modified_covariate, Method::augmented, Method::full_regression});
    const double nw = m.median[Method::modified_covariate], au = m.median[Method::augmented],
                 full = m.median[Method::full_regression];
    return {nw > full && au >= nw - 0.02, m.text + "need new > full and augmented >= new - 0.02"};
}

Outcome ordering_setting3() {
    Medians m = run_setting(3, Family::gaussian, {Method::modified_covariate, Method::augmented});
    const double gap = m.median[Method::augmented] - m.median[Method::modified_covariate];
    return {gap >= 0.05, m.text + "augmented - new = " + fmt(gap)};
}

Outcome ordering_binary_setting4() {
    Medians m = run_setting(4, Family::binomial, {Method::modified_covariate, Method::augmented});
    const double gap = m.median[Method::augmented] - m.median[Method::modified_covariate];
    return {gap > 0, m.text + "augmented - new = " + fmt(gap)};
}

// 10 ------------------------------------------------------------------------

Outcome survival_workflow() {
    SimulationSetting s = SimulationSetting::standard(1, Family::cox, 50);
    s.censor_xi = calibrate_censoring(s, s.censor_target, derive_seed(kMasterSeed, stream::censoring));
    const int runs = 50;
    std::map<Method, int> agree;
    std::map<Method, int> failures;
    for (int run = 0; run < runs; ++run) {
        const std::uint64_t seed = derive_seed(kMasterSeed, 1000 + static_cast<std::uint64_t>(run));
        Dataset train = gen_survival(s, s.n, derive_seed(seed, stream::train), *s.censor_xi);
        Dataset test = gen_survival(s, 1000, derive_seed(seed, stream::test), *s.censor_xi);
        const Vector delta = true_delta(s, test.z);
        for (Method method : {Method::modified_covariate, Method::augmented}) {
            try {
                FitOptions opt;
                opt.method = method;
                opt.seed = derive_seed(seed, stream::cv_interaction);
                FitReport rep = fit_model(train, opt);
                StratifiedGroups g = stratify(benefit_score(rep.model, test.z), StratifyRule::median());
                double log_hr[2], mean_delta[2];
                bool ok = true;
                for (int k = 0; k < 2; ++k) {
                    std::vector<Index> rows;
                    for (size_t i = 0; i < g.labels.size(); ++i)
                        if (g.labels[i] == k) rows.push_back(static_cast<Index>(i));
                    CoxTwoGroup c = cox_two_group(take(test.time, rows), take(test.status, rows), take(test.treatment, rows));
                    ok = ok && c.estimable;
                    log_hr[k] = c.log_hr;
                    mean_delta[k] = take(delta, rows).mean();
                }
                if (!ok) {
                    ++failures[method];
                    continue;
                }
                // larger true Delta means T = +1 survives longer, i.e. a lower log-HR of +1 vs -1
                const double implied = mean_delta[1] - mean_delta[0];
                agree[method] += (log_hr[1] - log_hr[0]) * implied < 0;
            } catch (const Error&) {
                ++failures[method];
            }
        }
    }
    Outcome out;
    for (Method method : {Method::modified_covariate, Method::augmented}) {
        out.pass = out.pass && agree[method] >= 40;
        out.detail += to_string(method) + " " + std::to_string(agree[method]) + "/" + std::to_string(runs) +
                      (failures[method] ? " (" + std::to_string(failures[method]) + " failed)" : "") + "; ";
    }
    out.detail += "need >= 40/50 each";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    std::string note3;
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "modified-outcome identity", 5, modified_outcome_identity},
        {2, "augmented path equals residualized-outcome path", 10, residualized_outcome_identity},
        {3, "population minimizers", 5, [&] { return population_oracles(note3); }},
        {4, "solver correctness", 30, solver_correctness},
        {5, "martingale residuals", 2, martingale_residual_checks},
        {6, "censoring calibration", 60, censoring_calibration},
        {7, "setting 1 continuous ordering", 600, ordering_setting1},
        {8, "setting 3 augmentation gain", 600, ordering_setting3},
        {9, "setting 4 binary augmentation gain", 900, ordering_binary_setting4},
        {10, "survival workflow direction", 900, survival_workflow},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail
                  << " [" << fmt(secs, 3) << " s of " << c.budget_s << " s" << (in_time ? "" : ", over budget")
                  << "]" << std::endl;
    }
    return failed ? 1 : 0;
}
