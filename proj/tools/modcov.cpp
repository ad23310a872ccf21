// modcov: fit, score, evaluate, simulate, export.
//
// Exit codes: 0 ok, 2 invalid input / unsupported / bad flags,
// 3 solver non-convergence, 4 model/data incompatible.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "modcov/modcov.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace modcov;

namespace {

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_input:
        case ErrorKind::unsupported: return 2;
        case ErrorKind::non_convergence: return 3;
        case ErrorKind::incompatible: return 4;
    }
    return 2;
}

unsigned thread_count(int flag) {
    if (flag > 0) return static_cast<unsigned>(flag);
    if (const char* env = std::getenv("MODCOV_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::invalid_input, "cannot write '" + path + "'");
    return out;
}

Dataset load_dataset(const std::string& path, Family family, bool remap) {
    RawTable t = read_csv_file(path);
    ValidateOptions vo;
    vo.remap_treatment = remap;
    return validate_dataset(t, family, vo);
}

/// Covariate matrix for scoring: columns looked up by the names the model
/// was trained on, so outcome columns are optional.
Matrix scoring_covariates(const RawTable& t, const BasisSpec& basis, std::vector<std::string>& ids) {
    std::vector<int> cols;
    for (const auto& name : basis.names) {
        int c = t.column(name);
        if (c < 0) fail(ErrorKind::incompatible, "data lacks covariate column '" + name + "' required by the model");
        cols.push_back(c);
    }
    const int id_col = t.column("id");
    Matrix z(static_cast<Index>(t.rows.size()), static_cast<Index>(cols.size()));
    for (size_t i = 0; i < t.rows.size(); ++i) {
        ids.push_back(id_col >= 0 ? t.rows[i][static_cast<size_t>(id_col)] : std::to_string(i + 1));
        for (size_t j = 0; j < cols.size(); ++j) {
            const std::string& s = t.rows[i][static_cast<size_t>(cols[j])];
            double v;
            if (!parse_double(s, v))
                fail(ErrorKind::invalid_input, "row " + std::to_string(i + 1) + ", column '" + basis.names[j] +
                                                   "': non-numeric value '" + s + "'");
            z(static_cast<Index>(i), static_cast<Index>(j)) = v;
        }
    }
    return z;
}

StratifyRule parse_stratify(const std::string& s) {
    if (s == "median") return StratifyRule::median();
    if (s == "tertile") return StratifyRule::quantiles(3);
    if (s.size() > 1 && s[0] == 'q') {
        int k = 0;
        try {
            k = std::stoi(s.substr(1));
        } catch (...) {
        }
        if (k >= 2) return StratifyRule::quantiles(k);
    }
    fail(ErrorKind::invalid_input, "unknown stratification '" + s + "' (none|median|tertile|q<k>)");
}

void print_warnings(const std::vector<std::string>& w) {
    for (const auto& s : w) std::cerr << "warning: " << s << "\n";
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string data, out, family = "gaussian", method = "new", link = "riskdiff", lambda = "cv", adaptive = "none";
    std::string cv_out;
    int folds = 20;
    std::optional<std::uint64_t> seed;
    bool one_se = false, remap = false, exempt_first = false, scale = false;
    std::optional<double> tau;
};

int cmd_fit(const FitArgs& a) {
    Family family = parse_family(a.family);
    Dataset d = load_dataset(a.data, family, a.remap);
    FitOptions opt;
    opt.method = parse_method(a.method);
    opt.link = parse_link(a.link);
    if (family != Family::binomial && opt.link == BinaryLink::relative_risk)
        fail(ErrorKind::invalid_input, "--link relrisk applies to binomial data only");
    opt.folds = a.folds;
    opt.adaptive = parse_adaptive_mode(a.adaptive);
    opt.one_se = a.one_se;
    opt.exempt_first = a.exempt_first;
    opt.tau = a.tau;
    opt.basis.scale = a.scale;
    if (a.lambda != "cv") {
        double v;
        if (!parse_double(a.lambda, v) || v < 0) fail(ErrorKind::invalid_input, "--lambda must be 'cv' or a value >= 0");
        opt.lambda = v;
    }
    const bool needs_seed = !opt.lambda || opt.method == Method::augmented;
    if (needs_seed && !a.seed) fail(ErrorKind::invalid_input, "--seed is required when cross-validation is used");
    opt.seed = a.seed.value_or(0);

    FitReport rep = fit_model(d, opt);
    print_warnings(rep.warnings);
    if (!rep.fit.converged) fail(ErrorKind::non_convergence, "solver did not converge at lambda " + format_double(rep.fit.lambda));

    Provenance prov;
    prov.input_digest = file_digest(a.data);
    prov.timestamp = utc_timestamp();
    ModelDocument doc = make_document(rep, opt, d, prov);
    save_model(doc, a.out);

    Index nz = 0;
    for (Index j = 1; j < rep.model.gamma.size(); ++j) nz += rep.model.gamma[j] != 0.0;
    std::cout << "method: " << to_string(opt.method) << "\n"
              << "family: " << to_string(family) << "\n"
              << "lambda: " << format_double(rep.model.lambda) << (opt.lambda ? " (fixed)" : " (cross-validated)") << "\n"
              << "nonzero interaction coefficients: " << nz << " of " << rep.model.gamma.size() - 1 << "\n"
              << "model: " << a.out << "\n";
    if (rep.path) {
        const std::string path = a.cv_out.empty() ? a.out + ".cv.csv" : a.cv_out;
        auto out = open_out(path);
        out << "lambda,cv_mean,cv_se,train_loss,nonzero,selected\n";
        const auto& p = *rep.path;
        for (size_t k = 0; k < p.grid.size(); ++k)
            out << format_double(p.grid[k]) << ',' << format_double(p.cv_mean[k]) << ',' << format_double(p.cv_se[k])
                << ',' << format_double(p.train_loss[k]) << ',' << p.fits[k].nonzero() << ','
                << (k == p.selected ? 1 : 0) << '\n';
        std::cout << "cv curve: " << path << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ScoreArgs {
    std::string model, data, out, stratify = "none";
};

int cmd_score(const ScoreArgs& a) {
    ModelDocument doc = load_model(a.model);
    const InteractionModel& m = doc.model;
    RawTable t = read_csv_file(a.data);
    std::vector<std::string> ids;
    Matrix z = scoring_covariates(t, m.basis, ids);
    Vector score = interaction_score(m, z);
    Vector benefit = m.family == Family::cox ? Vector(-score) : score;
    std::optional<StratifiedGroups> groups;
    if (a.stratify != "none") groups = stratify(benefit, parse_stratify(a.stratify));

    std::ofstream file;
    std::ostream* out = &std::cout;
    if (!a.out.empty()) {
        file = open_out(a.out);
        out = &file;
    }
    const bool rd = m.family == Family::binomial && m.link == BinaryLink::risk_difference;
    const bool rr = m.family == Family::binomial && m.link == BinaryLink::relative_risk;
    *out << "id,score";
    if (rd) *out << ",delta_hat";
    if (rr) *out << ",relative_risk";
    if (groups) *out << ",group";
    *out << '\n';
    for (Index i = 0; i < score.size(); ++i) {
        *out << csv_escape(ids[static_cast<size_t>(i)]) << ',' << format_double(score[i]);
        if (rd) *out << ',' << format_double(risk_difference_of_score(score[i]));
        if (rr) *out << ',' << format_double(relative_risk_of_score(score[i]));
        if (groups) *out << ',' << group_name(groups->labels[static_cast<size_t>(i)], groups->group_count());
        *out << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string model, data, out, km_out, groups = "median";
    bool remap = false;
};

json curve_json(const SurvivalCurve& c) {
    json pts = json::array();
    for (size_t k = 0; k < c.times.size(); ++k)
        pts.push_back({{"time", c.times[k]}, {"survival", c.survival[k]}, {"at_risk", c.at_risk[k]},
                       {"events", c.events[k]}, {"censored", c.censored[k]}});
    return pts;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int cmd_evaluate(const EvaluateArgs& a) {
    ModelDocument doc = load_model(a.model);
    const InteractionModel& m = doc.model;
    if (m.family != Family::cox) fail(ErrorKind::unsupported, "evaluate needs a survival model");
    if (a.groups != "median" && a.groups != "tertile")
        fail(ErrorKind::invalid_input, "--groups must be median or tertile");
    Dataset d = load_dataset(a.data, Family::cox, a.remap);
    Vector benefit = benefit_score(m, d.z);
    StratifiedGroups g = stratify(benefit, parse_stratify(a.groups));

    json strata = json::array();
    std::ofstream km;
    if (!a.km_out.empty()) {
        km = open_out(a.km_out);
        km << "stratum,arm,time,survival,at_risk,events,censored\n";
    }
    for (int s = 0; s < g.group_count(); ++s) {
        std::vector<Index> rows;
        for (size_t i = 0; i < g.labels.size(); ++i)
            if (g.labels[i] == s) rows.push_back(static_cast<Index>(i));
        const std::string name = group_name(s, g.group_count());
        Vector time = take(d.time, rows), status = take(d.status, rows), trt = take(d.treatment, rows);
        json sj{{"stratum", name}, {"n", rows.size()}, {"events", static_cast<Index>(status.sum())}};
        std::set<double> arms(trt.data(), trt.data() + trt.size());
        if (arms.size() == 2 && status.sum() > 0) {
            CoxTwoGroup hr = cox_two_group(time, status, trt);
            LogRankResult lr = logrank(time, status, trt);
            sj["hazard_ratio"] = nullable(hr.hr);
            sj["log_hazard_ratio"] = nullable(hr.log_hr);
            sj["se_log_hazard_ratio"] = nullable(hr.se);
            sj["wald_p"] = nullable(hr.p_value);
            if (!hr.note.empty()) sj["note"] = hr.note;
            sj["logrank_chisq"] = lr.statistic;
            sj["logrank_p"] = lr.p_value;
        } else {
            sj["note"] = "stratum lacks one arm or has no events; no between-arm comparison";
        }
        json curves;
        for (double arm : {1.0, -1.0}) {
            std::vector<Index> sub;
            for (size_t i = 0; i < rows.size(); ++i)
                if (trt[static_cast<Index>(i)] == arm) sub.push_back(static_cast<Index>(i));
            if (sub.empty()) continue;
            SurvivalCurve c = kaplan_meier(take(time, sub), take(status, sub));
            const std::string label = arm > 0 ? "trt=+1" : "trt=-1";
            curves[label] = curve_json(c);
            if (km.is_open())
                for (size_t k = 0; k < c.times.size(); ++k)
                    km << name << ',' << (arm > 0 ? "+1" : "-1") << ',' << format_double(c.times[k]) << ','
                       << format_double(c.survival[k]) << ',' << c.at_risk[k] << ',' << c.events[k] << ','
                       << c.censored[k] << '\n';
        }
        sj["km"] = curves;
        strata.push_back(sj);
    }
    InteractionTest it = interaction_wald(d.time, d.status, d.treatment, benefit);
    json report{{"n", d.n()},
                {"groups", a.groups},
                {"cutpoints", g.cutpoints},
                {"hazard_ratio_definition", "hazard of trt=+1 relative to trt=-1"},
                {"strata", strata},
                {"interaction",
                 {{"terms", {"trt", "score", "trt:score"}},
                  {"estimable", it.estimable},
                  {"coefficients", it.estimable ? json(to_std(it.coefficients)) : json(nullptr)},
                  {"p_value", nullable(it.p_value)}}}};
    if (a.out.empty()) {
        std::cout << report.dump(2) << "\n";
    } else {
        open_out(a.out) << report.dump(2) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    int setting = 1, p = 50, reps = 10, folds = 20, threads = 0;
    Index n = 100, test_n = 10000;
    std::string family = "gaussian", methods = "new,augmented,full", out_dir = ".";
    std::optional<std::uint64_t> seed;
};

std::vector<Method> parse_methods(const std::string& s) {
    std::vector<Method> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = modcov::detail::trim(tok);
        if (tok.empty()) continue;
        Method m = parse_method(tok);
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) fail(ErrorKind::invalid_input, "--methods is empty");
    return out;
}

int cmd_simulate(const SimulateArgs& a) {
    if (!a.seed) fail(ErrorKind::invalid_input, "--seed is required for simulate");
    if (a.setting < 1 || a.setting > 4)
        fail(ErrorKind::invalid_input, "--setting must be 1..4, got " + std::to_string(a.setting));
    SimulationSetting s = SimulationSetting::standard(a.setting, parse_family(a.family), a.p);
    s.n = a.n;
    s.test_n = a.test_n;
    auto methods = parse_methods(a.methods);
    ExperimentOptions eo;
    eo.folds = a.folds;
    eo.threads = thread_count(a.threads);
    ExperimentResult r = run_experiment(s, methods, a.reps, *a.seed, eo);

    fs::create_directories(a.out_dir);
    const std::string csv_path = (fs::path(a.out_dir) / "results.csv").string();
    const std::string json_path = (fs::path(a.out_dir) / "summary.json").string();
    auto csv = open_out(csv_path);
    csv << "setting,family,p,method,rep,spearman\n";
    json summary{{"setting", a.setting},
                 {"family", to_string(s.family)},
                 {"p", a.p},
                 {"n", s.n},
                 {"test_n", s.test_n},
                 {"reps", a.reps},
                 {"seed", *a.seed}};
    if (s.family == Family::cox) summary["censoring_bound"] = *r.setting.censor_xi;
    json mj = json::array();
    for (const auto& mr : r.methods) {
        for (int k = 0; k < a.reps; ++k) {
            const double v = mr.spearman[static_cast<size_t>(k)];
            csv << a.setting << ',' << to_string(s.family) << ',' << a.p << ',' << to_string(mr.method) << ',' << k + 1
                << ',' << (std::isnan(v) ? std::string("NA") : format_double(v)) << '\n';
        }
        Quartiles q = quartiles(mr.spearman);
        int nulls = 0;
        for (char c : mr.null_score) nulls += c;
        double rt = 0;
        for (double t : mr.runtimes) rt += t;
        json failures = json::array();
        for (int k = 0; k < a.reps; ++k)
            if (!mr.failures[static_cast<size_t>(k)].empty())
                failures.push_back({{"rep", k + 1}, {"error", mr.failures[static_cast<size_t>(k)]}});
        mj.push_back({{"method", to_string(mr.method)},
                      {"median", nullable(q.median)},
                      {"q1", nullable(q.q1)},
                      {"q3", nullable(q.q3)},
                      {"completed", q.count},
                      {"null_models", nulls},
                      {"failures", failures},
                      {"mean_runtime_seconds", rt / a.reps}});
        std::cout << to_string(mr.method) << ": median spearman " << format_double(q.median) << " (IQR "
                  << format_double(q.q1) << " to " << format_double(q.q3) << "), " << q.count << "/" << a.reps
                  << " completed\n";
    }
    summary["methods"] = mj;
    open_out(json_path) << summary.dump(2) << "\n";
    std::cout << "results: " << csv_path << "\nsummary: " << json_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
    std::string data, out, family = "gaussian";
    bool remap = false, scale = false;
};

int cmd_export(const ExportArgs& a) {
    Family family = parse_family(a.family);
    Dataset d = load_dataset(a.data, family, a.remap);
    BasisRequest req;
    req.scale = a.scale;
    ModifiedDesign md = make_modified_design(d, req);
    print_warnings(md.basis.warnings);
    auto out = open_out(a.out);
    out << "wstar_intercept";
    for (const auto& n : md.basis.names) out << ",wstar_" << n;
    out << (family == Family::cox ? ",time,status" : ",y") << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        for (Index j = 0; j < md.wstar.cols(); ++j) out << (j ? "," : "") << format_double(md.wstar(i, j));
        if (family == Family::cox)
            out << ',' << format_double(d.time[i]) << ',' << format_double(d.status[i]);
        else
            out << ',' << format_double(d.y[i]);
        out << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Treatment-covariate interaction estimation with modified covariates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit an interaction model and write it as JSON");
    fit->add_option("--data", fa.data, "training CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", fa.out, "model JSON path")->required();
    fit->add_option("--family", fa.family, "gaussian|binomial|cox")->capture_default_str();
    fit->add_option("--method", fa.method, "new|augmented|full")->capture_default_str();
    fit->add_option("--link", fa.link, "riskdiff|relrisk (binomial)")->capture_default_str();
    fit->add_option("--lambda", fa.lambda, "cv or a fixed value")->capture_default_str();
    fit->add_option("--folds", fa.folds, "cross-validation folds")->capture_default_str()->check(CLI::Range(2, 100000));
    fit->add_option("--adaptive", fa.adaptive, "none|pooled|armwise")->capture_default_str();
    fit->add_option("--seed", fa.seed, "master seed (required with cross-validation)");
    fit->add_option("--tau", fa.tau, "survival horizon for martingale residuals");
    fit->add_option("--cv-out", fa.cv_out, "CV curve CSV (default <out>.cv.csv)");
    fit->add_flag("--one-se", fa.one_se, "choose the largest lambda within one SE of the CV minimum");
    fit->add_flag("--remap-treatment", fa.remap, "treatment coded 0/1 instead of -1/+1");
    fit->add_flag("--exempt-intercept", fa.exempt_first, "leave the intercept interaction unpenalized");
    fit->add_flag("--scale", fa.scale, "scale covariates to unit variance");

    ScoreArgs sa;
    auto* score = app.add_subcommand("score", "score subjects with a fitted model");
    score->add_option("--model", sa.model, "model JSON")->required()->check(CLI::ExistingFile);
    score->add_option("--data", sa.data, "CSV with the model's covariate columns")->required()->check(CLI::ExistingFile);
    score->add_option("--stratify", sa.stratify, "none|median|tertile|q<k>")->capture_default_str();
    score->add_option("--out", sa.out, "output CSV (default stdout)");

    EvaluateArgs ea;
    auto* eval = app.add_subcommand("evaluate", "stratified survival evaluation on held-out data");
    eval->add_option("--model", ea.model, "survival model JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--data", ea.data, "survival CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--groups", ea.groups, "median|tertile")->capture_default_str();
    eval->add_option("--out", ea.out, "report JSON (default stdout)");
    eval->add_option("--km-out", ea.km_out, "Kaplan-Meier curves CSV");
    eval->add_flag("--remap-treatment", ea.remap, "treatment coded 0/1 instead of -1/+1");

    SimulateArgs ma;
    auto* sim = app.add_subcommand("simulate", "run a simulation study");
    sim->add_option("--setting", ma.setting, "1..4")->capture_default_str();
    sim->add_option("--family", ma.family, "gaussian|binomial|cox")->capture_default_str();
    sim->add_option("--p", ma.p, "number of covariates")->capture_default_str();
    sim->add_option("--n", ma.n, "training size")->capture_default_str();
    sim->add_option("--test-n", ma.test_n, "test size")->capture_default_str();
    sim->add_option("--reps", ma.reps, "replications")->capture_default_str()->check(CLI::PositiveNumber);
    sim->add_option("--folds", ma.folds, "cross-validation folds")->capture_default_str();
    sim->add_option("--seed", ma.seed, "master seed")->required();
    sim->add_option("--methods", ma.methods, "comma list of new,augmented,full")->capture_default_str();
    sim->add_option("--out-dir", ma.out_dir, "output directory")->capture_default_str();
    sim->add_option("--threads", ma.threads, "worker threads (default MODCOV_THREADS or 1)");

    ExportArgs xa;
    auto* exp = app.add_subcommand("export", "write the modified-covariate data set");
    exp->add_option("--data", xa.data, "input CSV")->required()->check(CLI::ExistingFile);
    exp->add_option("--family", xa.family, "gaussian|binomial|cox")->capture_default_str();
    exp->add_option("--out", xa.out, "output CSV")->required();
    exp->add_flag("--remap-treatment", xa.remap, "treatment coded 0/1 instead of -1/+1");
    exp->add_flag("--scale", xa.scale, "scale covariates to unit variance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*fit) return cmd_fit(fa);
        if (*score) return cmd_score(sa);
        if (*eval) return cmd_evaluate(ea);
        if (*sim) return cmd_simulate(ma);
        if (*exp) return cmd_export(xa);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
