#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "modcov/data_model.hpp"
#include "modcov/pipeline.hpp"
#include "modcov/rng.hpp"
#include "modcov/scoring.hpp"

namespace modcov {

/// One simulation design:
///   linear predictor  beta'Z + T gamma'Z + sigma0 * eps,
///   Z ~ N(0, (1 - rho) I + rho 11'), T = +/-1 with probability 1/2.
/// Continuous outcomes are the predictor itself, binary outcomes its
/// indicator of being >= 0, survival times its exponential (censored by
/// Uniform(0, xi0)).
struct SimulationSetting {
    Family family = Family::gaussian;
    int id = 1;
    Index p = 50;
    Index n = 100;
    double rho = 0.0;
    Vector beta;
    Vector gamma;
    double sigma0 = std::sqrt(2.0);
    double censor_target = 0.25;
    std::optional<double> censor_xi;  // Uniform(0, xi0) censoring upper bound
    Index test_n = 10000;
    double t0 = 5.0;

    /// The four standard settings: main effects (-1)^{j+1} I(3<=j<=10) / 4
    /// (settings 1, 2) or / 2 (settings 3, 4); rho = 0 (1, 3) or 0.5 (2, 4);
    /// interactions (1/2, -1/2, 1/2, -1/2, 0, ...).
    static SimulationSetting standard(int id, Family family, Index p = 50) {
        require(id >= 1 && id <= 4, "simulation setting id must be 1..4, got " + std::to_string(id));
        require(p >= 10, "standard settings need p >= 10");
        SimulationSetting s;
        s.family = family;
        s.id = id;
        s.p = p;
        s.rho = (id == 2 || id == 4) ? 0.5 : 0.0;
        const double scale = id <= 2 ? 0.25 : 0.5;
        s.beta = Vector::Zero(p);
        s.gamma = Vector::Zero(p);
        for (Index j = 1; j <= p; ++j) {
            if (j >= 3 && j <= 10) s.beta[j - 1] = (j % 2 == 1 ? 1.0 : -1.0) * scale;
            if (j <= 4) s.gamma[j - 1] = (j % 2 == 1 ? 0.5 : -0.5);
        }
        return s;
    }

    void validate() const {
        require(rho >= 0 && rho < 1, "rho must be in [0, 1)");
        require(beta.size() == p && gamma.size() == p, "beta/gamma must have length p");
        require(sigma0 >= 0, "sigma0 must be >= 0");
        require(n >= 2 && test_n >= 2, "sample sizes must be >= 2");
    }
};

/// Z = sqrt(rho) u 1' + sqrt(1 - rho) E with u, E standard normal.
inline Matrix gen_covariates(const SimulationSetting& s, Index n, Rng& rng) {
    require(s.rho >= 0 && s.rho < 1, "rho must be in [0, 1), got " + std::to_string(s.rho));
    std::normal_distribution<double> norm;
    Matrix z(n, s.p);
    const double a = std::sqrt(s.rho), b = std::sqrt(1.0 - s.rho);
    for (Index i = 0; i < n; ++i) {
        const double u = norm(rng);
        for (Index j = 0; j < s.p; ++j) z(i, j) = a * u + b * norm(rng);
    }
    return z;
}

inline Matrix gen_covariates(const SimulationSetting& s, Index n, std::uint64_t seed) {
    Rng rng(splitmix64(seed));
    return gen_covariates(s, n, rng);
}

namespace detail {

struct LatentDraw {
    Matrix z;
    Vector t;
    Vector lin;  // beta'z + t gamma'z + sigma0 eps
};

inline LatentDraw draw_latent(const SimulationSetting& s, Index n, Rng& rng) {
    LatentDraw d;
    d.z = gen_covariates(s, n, rng);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> norm;
    d.t.resize(n);
    d.lin.resize(n);
    Vector main = d.z * s.beta, inter = d.z * s.gamma;
    for (Index i = 0; i < n; ++i) {
        d.t[i] = coin(rng) ? 1.0 : -1.0;
        d.lin[i] = main[i] + d.t[i] * inter[i] + s.sigma0 * norm(rng);
    }
    return d;
}

inline double open_uniform(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v;
    do v = u(rng);
    while (v <= 0.0);
    return v;
}

inline Dataset wrap(const SimulationSetting& s, LatentDraw&& d) {
    Dataset out;
    out.family = s.family;
    out.z = std::move(d.z);
    out.treatment = std::move(d.t);
    for (Index j = 0; j < s.p; ++j) out.covariate_names.push_back("z" + std::to_string(j + 1));
    for (Index i = 0; i < out.z.rows(); ++i) out.ids.push_back(std::to_string(i + 1));
    return out;
}

}  // namespace detail

inline Dataset gen_continuous(const SimulationSetting& s, Index n, std::uint64_t seed) {
    s.validate();
    Rng rng(splitmix64(seed));
    auto d = detail::draw_latent(s, n, rng);
    Vector y = d.lin;
    SimulationSetting c = s;
    c.family = Family::gaussian;
    Dataset out = detail::wrap(c, std::move(d));
    out.y = std::move(y);
    return out;
}

inline Dataset gen_binary(const SimulationSetting& s, Index n, std::uint64_t seed) {
    s.validate();
    Rng rng(splitmix64(seed));
    auto d = detail::draw_latent(s, n, rng);
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = d.lin[i] >= 0 ? 1.0 : 0.0;
    SimulationSetting c = s;
    c.family = Family::binomial;
    Dataset out = detail::wrap(c, std::move(d));
    out.y = std::move(y);
    return out;
}

/// Survival times exp(linear predictor) censored by Uniform(0, xi0).
inline Dataset gen_survival(const SimulationSetting& s, Index n, std::uint64_t seed, double xi0) {
    s.validate();
    require(xi0 > 0, "censoring bound xi0 must be > 0");
    Rng rng(splitmix64(seed));
    auto d = detail::draw_latent(s, n, rng);
    Vector time(n), status(n);
    for (Index i = 0; i < n; ++i) {
        const double t = std::exp(d.lin[i]);
        const double c = xi0 * detail::open_uniform(rng);
        status[i] = t < c ? 1.0 : 0.0;
        time[i] = std::min(t, c);
    }
    SimulationSetting c = s;
    c.family = Family::cox;
    Dataset out = detail::wrap(c, std::move(d));
    out.time = std::move(time);
    out.status = std::move(status);
    return out;
}

inline double censoring_rate(const Dataset& d) {
    double c = 0;
    for (Index i = 0; i < d.status.size(); ++i) c += d.status[i] == 0.0;
    return c / static_cast<double>(d.status.size());
}

struct CalibrationOptions {
    Index draws = 100000;
    double tolerance = 0.005;
    int max_doublings = 60;
    int max_bisections = 200;
};

/// Finds xi0 so that Uniform(0, xi0) censoring hits `target`. Uses one fixed
/// Monte-Carlo sample of event times and uniforms, so the censoring rate is
/// a monotone decreasing step function of xi0 and bisection is exact.
inline double calibrate_censoring(const SimulationSetting& s, double target, std::uint64_t seed,
                                  const CalibrationOptions& opt = {}) {
    require(target > 0 && target < 1, "censoring target must be in (0, 1)");
    s.validate();
    Rng rng(splitmix64(seed));
    auto d = detail::draw_latent(s, opt.draws, rng);
    std::vector<double> ratio(static_cast<size_t>(opt.draws));  // censored iff xi0 <= time / u
    for (Index i = 0; i < opt.draws; ++i) ratio[static_cast<size_t>(i)] = std::exp(d.lin[i]) / detail::open_uniform(rng);
    auto rate = [&](double xi) {
        size_t c = 0;
        for (double r : ratio) c += xi <= r;
        return static_cast<double>(c) / static_cast<double>(ratio.size());
    };
    double lo = 1.0, hi = 1.0;
    int doublings = 0;
    while (rate(hi) > target) {
        hi *= 2.0;
        if (++doublings > opt.max_doublings) fail(ErrorKind::non_convergence, "censoring calibration: no upper bracket");
    }
    doublings = 0;
    while (rate(lo) < target) {
        lo /= 2.0;
        if (++doublings > opt.max_doublings) fail(ErrorKind::non_convergence, "censoring calibration: no lower bracket");
    }
    for (int it = 0; it < opt.max_bisections; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double r = rate(mid);
        if (std::abs(r - target) < opt.tolerance) return mid;
        (r > target ? lo : hi) = mid;
    }
    fail(ErrorKind::non_convergence, "censoring calibration did not reach tolerance");
}

inline Dataset generate(const SimulationSetting& s, Index n, std::uint64_t seed) {
    switch (s.family) {
        case Family::gaussian: return gen_continuous(s, n, seed);
        case Family::binomial: return gen_binary(s, n, seed);
        case Family::cox:
            require(s.censor_xi.has_value(), "survival setting needs a calibrated censoring bound");
            return gen_survival(s, n, seed, *s.censor_xi);
    }
    fail(ErrorKind::unsupported, "unknown family");
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Exact covariate-specific treatment effect of the generating model:
/// continuous 2 gamma'z; binary Phi((beta+gamma)'z / sigma0) -
/// Phi((beta-gamma)'z / sigma0); survival the difference in Prob(time >= t0).
inline Vector true_delta(const SimulationSetting& s, const Matrix& z) {
    require(z.cols() == s.p, "true_delta: covariate dimension mismatch");
    Vector main = z * s.beta, inter = z * s.gamma;
    Vector out(z.rows());
    for (Index i = 0; i < z.rows(); ++i) {
        switch (s.family) {
            case Family::gaussian: out[i] = 2.0 * inter[i]; break;
            case Family::binomial:
                out[i] = normal_cdf((main[i] + inter[i]) / s.sigma0) - normal_cdf((main[i] - inter[i]) / s.sigma0);
                break;
            case Family::cox: {
                const double lt = std::log(s.t0);
                out[i] = normal_cdf((main[i] + inter[i] - lt) / s.sigma0) -
                         normal_cdf((main[i] - inter[i] - lt) / s.sigma0);
                break;
            }
        }
    }
    return out;
}

/// Average ranks (1-based), ties share the mean of their positions.
inline Vector average_ranks(const Vector& v) {
    const Index n = v.size();
    std::vector<Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v[a] < v[b]; });
    Vector r(n);
    size_t k = 0;
    while (k < order.size()) {
        size_t e = k;
        while (e < order.size() && v[order[e]] == v[order[k]]) ++e;
        const double avg = (static_cast<double>(k) + static_cast<double>(e - 1)) / 2.0 + 1.0;
        for (size_t m = k; m < e; ++m) r[order[m]] = avg;
        k = e;
    }
    return r;
}

/// Spearman rank correlation; NaN when either input is constant.
inline double spearman(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "spearman: length mismatch");
    require(a.size() >= 2, "spearman: need at least 2 values");
    Vector ra = average_ranks(a), rb = average_ranks(b);
    ra.array() -= ra.mean();
    rb.array() -= rb.mean();
    const double den = std::sqrt(ra.squaredNorm() * rb.squaredNorm());
    if (!(den > 0)) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(ra.dot(rb) / den, -1.0, 1.0);
}

/// Full main-effect plus interaction Lasso comparator.
inline FitReport fit_full_regression(const Dataset& d, FitOptions opt) {
    opt.method = Method::full_regression;
    return fit_model(d, opt);
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentOptions {
    int folds = 20;
    int n_lambda = 100;
    double lambda_ratio = 1e-3;
    unsigned threads = 1;
    SolverOptions solver;
};

struct MethodResult {
    Method method = Method::modified_covariate;
    std::vector<double> spearman;     // per replication; NaN marks a failed fit
    std::vector<double> lambdas;
    std::vector<double> runtimes;     // seconds
    std::vector<char> null_score;     // score constant on the test set (recorded as rho = 0)
    std::vector<std::string> failures;

    int failure_count() const {
        int c = 0;
        for (double v : spearman) c += std::isnan(v);
        return c;
    }
};

struct Quartiles {
    double q1 = 0, median = 0, q3 = 0;
    Index count = 0;
};

inline Quartiles quartiles(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    Quartiles q;
    q.count = static_cast<Index>(v.size());
    if (v.empty()) {
        q.q1 = q.median = q.q3 = std::numeric_limits<double>::quiet_NaN();
        return q;
    }
    std::sort(v.begin(), v.end());
    q.q1 = quantile_sorted(v, 0.25);
    q.median = quantile_sorted(v, 0.5);
    q.q3 = quantile_sorted(v, 0.75);
    return q;
}

struct ExperimentResult {
    SimulationSetting setting;
    std::uint64_t master_seed = 0;
    int reps = 0;
    std::vector<MethodResult> methods;
};

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers. Results must
/// be written to slot i so the outcome does not depend on scheduling.
inline void parallel_for(size_t count, unsigned threads, const std::function<void(size_t)>& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (size_t i = next++; i < count; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Replication r uses seed derive_seed(master, r) for its training set,
/// test set and every cross-validation split, so replications are
/// independent of each other and of the worker count.
inline ExperimentResult run_experiment(SimulationSetting setting, const std::vector<Method>& methods, int reps,
                                       std::uint64_t master_seed, const ExperimentOptions& opt = {}) {
    require(reps >= 1, "reps must be >= 1");
    require(!methods.empty(), "no methods requested");
    setting.validate();
    if (setting.family == Family::cox && !setting.censor_xi)
        setting.censor_xi = calibrate_censoring(setting, setting.censor_target, derive_seed(master_seed, stream::censoring));

    ExperimentResult res;
    res.setting = setting;
    res.master_seed = master_seed;
    res.reps = reps;
    for (Method m : methods) {
        MethodResult mr;
        mr.method = m;
        mr.spearman.assign(static_cast<size_t>(reps), std::numeric_limits<double>::quiet_NaN());
        mr.lambdas.assign(static_cast<size_t>(reps), std::numeric_limits<double>::quiet_NaN());
        mr.runtimes.assign(static_cast<size_t>(reps), 0.0);
        mr.null_score.assign(static_cast<size_t>(reps), 0);
        mr.failures.assign(static_cast<size_t>(reps), "");
        res.methods.push_back(std::move(mr));
    }

    parallel_for(static_cast<size_t>(reps), opt.threads, [&](size_t r) {
        const std::uint64_t seed = derive_seed(master_seed, r);
        Dataset train = generate(setting, setting.n, derive_seed(seed, stream::train));
        Dataset test = generate(setting, setting.test_n, derive_seed(seed, stream::test));
        Vector truth = true_delta(setting, test.z);
        for (auto& mr : res.methods) {
            FitOptions fo;
            fo.method = mr.method;
            fo.folds = opt.folds;
            fo.seed = seed;
            fo.n_lambda = opt.n_lambda;
            fo.lambda_ratio = opt.lambda_ratio;
            fo.solver = opt.solver;
            auto t0 = std::chrono::steady_clock::now();
            try {
                FitReport rep = fit_model(train, fo);
                Vector score = benefit_score(rep.model, test.z);
                double rho = spearman(score, truth);
                if (std::isnan(rho)) {
                    rho = 0.0;
                    mr.null_score[r] = 1;
                }
                mr.spearman[r] = rho;
                mr.lambdas[r] = rep.model.lambda;
            } catch (const std::exception& e) {
                mr.failures[r] = e.what();
            }
            mr.runtimes[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    });
    return res;
}

}  // namespace modcov
