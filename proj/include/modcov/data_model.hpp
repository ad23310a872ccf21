#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "modcov/common.hpp"
#include "modcov/csv.hpp"

namespace modcov {

/// One randomized-trial style dataset: outcome, treatment coded -1/+1 and
/// a covariate matrix with one row per subject.
///
/// For gaussian and binomial data `y` holds the outcome and `time`/`status`
/// are empty; for cox data the reverse.
struct Dataset {
    Family family = Family::gaussian;
    Vector y;
    Vector time;
    Vector status;
    Vector treatment;
    Matrix z;
    std::vector<std::string> ids;
    std::vector<std::string> covariate_names;

    Index n() const { return z.rows(); }
    Index q() const { return z.cols(); }
};

struct DatasetSummary {
    Index n = 0;
    Index q = 0;
    Index treated = 0;   // T = +1
    Index control = 0;   // T = -1
    Index events = 0;    // cox only
};

inline DatasetSummary summarize(const Dataset& d) {
    DatasetSummary s;
    s.n = d.n();
    s.q = d.q();
    for (Index i = 0; i < d.treatment.size(); ++i) (d.treatment[i] > 0 ? s.treated : s.control)++;
    if (d.family == Family::cox)
        for (Index i = 0; i < d.status.size(); ++i) s.events += d.status[i] > 0.5 ? 1 : 0;
    return s;
}

/// Checks every structural invariant of a dataset. `for_fitting` also
/// demands both treatment arms.
inline void check_dataset(const Dataset& d, bool for_fitting = true) {
    const Index n = d.n();
    require(n >= 2, "dataset needs N >= 2 subjects, got " + std::to_string(n));
    require(d.q() >= 1, "dataset needs at least one covariate");
    require(d.treatment.size() == n, "treatment length does not match covariate rows");
    for (Index i = 0; i < n; ++i) {
        require(d.treatment[i] == 1.0 || d.treatment[i] == -1.0,
                "row " + std::to_string(i + 1) + ": treatment must be -1 or +1");
        for (Index j = 0; j < d.q(); ++j)
            require(std::isfinite(d.z(i, j)), "row " + std::to_string(i + 1) + ", covariate " +
                                                  std::to_string(j + 1) + ": non-finite value");
    }
    if (d.family == Family::cox) {
        require(d.time.size() == n && d.status.size() == n, "time/status length mismatch");
        for (Index i = 0; i < n; ++i) {
            require(std::isfinite(d.time[i]) && d.time[i] > 0,
                    "row " + std::to_string(i + 1) + ": survival time must be > 0");
            require(d.status[i] == 0.0 || d.status[i] == 1.0,
                    "row " + std::to_string(i + 1) + ": status must be 0 or 1");
        }
    } else {
        require(d.y.size() == n, "outcome length does not match covariate rows");
        for (Index i = 0; i < n; ++i) {
            require(std::isfinite(d.y[i]), "row " + std::to_string(i + 1) + ": non-finite outcome");
            if (d.family == Family::binomial)
                require(d.y[i] == 0.0 || d.y[i] == 1.0,
                        "row " + std::to_string(i + 1) + ": binary outcome must be 0 or 1");
        }
    }
    if (for_fitting) {
        auto s = summarize(d);
        require(s.treated > 0 && s.control > 0, "single-arm data: both treatment arms are required");
        if (d.family == Family::cox) require(s.events > 0, "all-censored survival data: no events");
    }
}

/// Subset of subjects, in the given order.
inline Dataset subset(const Dataset& d, const std::vector<Index>& rows) {
    Dataset out;
    out.family = d.family;
    out.y = take(d.y, rows);
    out.time = take(d.time, rows);
    out.status = take(d.status, rows);
    out.treatment = take(d.treatment, rows);
    out.z = take_rows(d.z, rows);
    out.covariate_names = d.covariate_names;
    if (!d.ids.empty())
        for (Index r : rows) out.ids.push_back(d.ids[static_cast<size_t>(r)]);
    return out;
}

struct ValidateOptions {
    /// Map treatment codes {0,1} to {-1,+1}. Never done implicitly.
    bool remap_treatment = false;
};

/// Turns a raw CSV table into a typed dataset.
///
/// Expected headers: `id,y,trt,z1..zq` for gaussian/binomial and
/// `id,time,status,trt,z1..zq` for cox. Every column after the fixed ones is
/// a covariate.
inline Dataset validate_dataset(const RawTable& t, Family family, const ValidateOptions& opt = {}) {
    const std::vector<std::string> fixed = family == Family::cox
                                               ? std::vector<std::string>{"id", "time", "status", "trt"}
                                               : std::vector<std::string>{"id", "y", "trt"};
    for (const auto& name : fixed)
        if (t.column(name) < 0) fail(ErrorKind::invalid_input, "missing column '" + name + "'");
    std::vector<int> cov_cols;
    std::vector<std::string> cov_names;
    for (size_t j = 0; j < t.header.size(); ++j) {
        bool is_fixed = false;
        for (const auto& name : fixed) is_fixed = is_fixed || t.header[j] == name;
        if (!is_fixed) {
            cov_cols.push_back(static_cast<int>(j));
            cov_names.push_back(t.header[j]);
        }
    }
    if (cov_cols.empty()) fail(ErrorKind::invalid_input, "no covariate columns (expected z1..zq)");
    const Index n = static_cast<Index>(t.rows.size());
    if (n < 2) fail(ErrorKind::invalid_input, "need N >= 2 rows, got " + std::to_string(n));

    auto cell = [&](Index i, int col) {
        const std::string& s = t.rows[static_cast<size_t>(i)][static_cast<size_t>(col)];
        double v;
        if (s.empty() || s == "NA" || s == "NaN" || s == "nan")
            fail(ErrorKind::invalid_input, "row " + std::to_string(i + 1) + ", column '" +
                                               t.header[static_cast<size_t>(col)] + "': missing value");
        if (!parse_double(s, v))
            fail(ErrorKind::invalid_input, "row " + std::to_string(i + 1) + ", column '" +
                                               t.header[static_cast<size_t>(col)] +
                                               "': non-numeric value '" + s + "'");
        return v;
    };

    Dataset d;
    d.family = family;
    d.covariate_names = cov_names;
    d.z.resize(n, static_cast<Index>(cov_cols.size()));
    d.treatment.resize(n);
    if (family == Family::cox) {
        d.time.resize(n);
        d.status.resize(n);
    } else {
        d.y.resize(n);
    }
    const int c_id = t.column("id"), c_trt = t.column("trt");
    for (Index i = 0; i < n; ++i) {
        const std::string row = "row " + std::to_string(i + 1);
        d.ids.push_back(t.rows[static_cast<size_t>(i)][static_cast<size_t>(c_id)]);
        double trt = cell(i, c_trt);
        if (opt.remap_treatment) {
            if (trt != 0.0 && trt != 1.0)
                fail(ErrorKind::invalid_input, row + ": treatment must be 0 or 1 when remapping");
            trt = trt == 1.0 ? 1.0 : -1.0;
        } else if (trt != 1.0 && trt != -1.0) {
            fail(ErrorKind::invalid_input,
                 row + ": treatment must be -1 or +1" +
                     std::string(trt == 0.0 ? " (0/1 coding needs the explicit remap flag)" : ""));
        }
        d.treatment[i] = trt;
        if (family == Family::cox) {
            double tm = cell(i, t.column("time"));
            if (tm <= 0) fail(ErrorKind::invalid_input, row + ": survival time must be > 0, got " + format_double(tm));
            double st = cell(i, t.column("status"));
            if (st != 0.0 && st != 1.0) fail(ErrorKind::invalid_input, row + ": status must be 0 or 1");
            d.time[i] = tm;
            d.status[i] = st;
        } else {
            double y = cell(i, t.column("y"));
            if (family == Family::binomial && y != 0.0 && y != 1.0)
                fail(ErrorKind::invalid_input, row + ": binary outcome must be 0 or 1");
            d.y[i] = y;
        }
        for (size_t j = 0; j < cov_cols.size(); ++j) d.z(i, static_cast<Index>(j)) = cell(i, cov_cols[j]);
    }
    auto s = summarize(d);
    if (s.treated == 0 || s.control == 0)
        fail(ErrorKind::invalid_input, "single-arm data: only T=" + std::string(s.treated ? "+1" : "-1") + " present");
    if (family == Family::cox && s.events == 0)
        fail(ErrorKind::invalid_input, "all-censored survival data: no events");
    return d;
}

/// Writes a dataset in the CSV schema `validate_dataset` reads.
inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
    if (!d.ids.empty() && static_cast<Index>(d.ids.size()) != d.n())
        fail(ErrorKind::invalid_input, "dataset has " + std::to_string(d.ids.size()) + " ids for " +
                                           std::to_string(d.n()) + " rows");
    out <<"id," << (d.family == Family::cox ? "time,status," : "y,") << "trt";
    for (Index j = 0; j < d.q(); ++j)
        out << ',' << (static_cast<size_t>(j) < d.covariate_names.size() ? d.covariate_names[static_cast<size_t>(j)]
                                                                         : "z" + std::to_string(j + 1));
    out << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        out << (d.ids.empty() ? std::to_string(i + 1) : csv_escape(d.ids[static_cast<size_t>(i)])) << ',';
        if (d.family == Family::cox)
            out << format_double(d.time[i]) << ',' << format_double(d.status[i]) << ',';
        else
            out << format_double(d.y[i]) << ',';
        out << format_double(d.treatment[i]);
        for (Index j = 0; j < d.q(); ++j) out << ',' << format_double(d.z(i, j));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Basis expansion W(z)

/// A user-supplied column transform applied to a raw covariate row.
struct ColumnTransform {
    std::string name;
    std::function<double(const Eigen::Ref<const Eigen::RowVectorXd>&)> fn;
};

struct BasisRequest {
    bool center = true;
    bool scale = false;
    /// Empty means the identity basis (1, z1, ..., zq).
    std::vector<ColumnTransform> transforms;
};

/// Frozen mapping z -> W(z). Column 0 of the output is always the
/// intercept; the remaining columns are the (transformed) covariates minus
/// `centers`, divided by `scales`.
struct BasisSpec {
    bool centered = true;
    bool scaled = false;
    std::vector<double> centers;
    std::vector<double> scales;
    std::vector<std::string> names;  // names of the non-intercept columns
    std::vector<ColumnTransform> transforms;
    std::vector<std::string> warnings;
    Index input_dim = 0;

    bool is_identity() const { return transforms.empty(); }
    Index dim() const { return static_cast<Index>(centers.size()) + 1; }

    Matrix raw_columns(const Matrix& z) const {
        if (z.cols() != input_dim)
            fail(ErrorKind::incompatible, "basis expects " + std::to_string(input_dim) + " covariates, got " +
                                              std::to_string(z.cols()));
        if (transforms.empty()) return z;
        Matrix out(z.rows(), static_cast<Index>(transforms.size()));
        for (Index i = 0; i < z.rows(); ++i)
            for (size_t k = 0; k < transforms.size(); ++k) out(i, static_cast<Index>(k)) = transforms[k].fn(z.row(i));
        return out;
    }

    Matrix apply(const Matrix& z) const {
        Matrix raw = raw_columns(z);
        Matrix w(z.rows(), dim());
        w.col(0).setOnes();
        for (Index j = 0; j < raw.cols(); ++j)
            w.col(j + 1) = (raw.col(j).array() - centers[static_cast<size_t>(j)]) / scales[static_cast<size_t>(j)];
        return w;
    }
};

/// Fits centering/scaling on `z` and returns the basis matrix together with
/// the frozen spec that reproduces it on new rows.
inline std::pair<Matrix, BasisSpec> build_basis(const Matrix& z, const BasisRequest& req = {},
                                                std::vector<std::string> names = {}) {
    const Index n = z.rows();
    require(n >= 2, "build_basis: need N >= 2 rows, got " + std::to_string(n));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < z.cols(); ++j)
            if (!std::isfinite(z(i, j)))
                fail(ErrorKind::invalid_input, "build_basis: non-finite value at row " + std::to_string(i + 1) +
                                                   ", column " + std::to_string(j + 1));
    BasisSpec spec;
    spec.centered = req.center;
    spec.scaled = req.scale;
    spec.transforms = req.transforms;
    spec.input_dim = z.cols();
    Matrix raw = spec.raw_columns(z);
    if (!req.transforms.empty()) {
        names.clear();
        for (const auto& t : req.transforms) names.push_back(t.name);
    }
    if (names.size() != static_cast<size_t>(raw.cols())) {
        names.clear();
        for (Index j = 0; j < raw.cols(); ++j) names.push_back("z" + std::to_string(j + 1));
    }
    spec.names = names;
    for (Index j = 0; j < raw.cols(); ++j) {
        const double mean = raw.col(j).mean();
        double sd = 1.0;
        if (req.scale) {
            double ss = (raw.col(j).array() - mean).square().sum();
            sd = std::sqrt(ss / static_cast<double>(n - 1));
            if (!(sd > 0)) {
                spec.warnings.push_back("column '" + names[static_cast<size_t>(j)] +
                                        "' has zero variance; scaling skipped");
                sd = 1.0;
            }
        }
        spec.centers.push_back(req.center ? mean : 0.0);
        spec.scales.push_back(sd);
    }
    return {spec.apply(z), std::move(spec)};
}

/// W* = W * T / 2, row by row.
inline Matrix modify_covariates(const Matrix& w, const Vector& t) {
    require(w.rows() == t.size(), "modify_covariates: W has " + std::to_string(w.rows()) + " rows but T has " +
                                      std::to_string(t.size()));
    Matrix out(w.rows(), w.cols());
    for (Index i = 0; i < w.rows(); ++i) {
        if (t[i] != 1.0 && t[i] != -1.0)
            fail(ErrorKind::invalid_input, "modify_covariates: row " + std::to_string(i + 1) +
                                               ": treatment must be -1 or +1");
        out.row(i) = w.row(i) * (t[i] / 2.0);
    }
    return out;
}

/// 2 * Y * T, the response whose regression on W targets the interaction.
/// Only meaningful for a continuous outcome.
inline Vector modified_outcome(const Vector& y, const Vector& t, Family family = Family::gaussian) {
    if (family != Family::gaussian)
        fail(ErrorKind::unsupported, "modified outcome is defined for continuous outcomes only");
    require(y.size() == t.size(), "modified_outcome: length mismatch");
    return 2.0 * y.cwiseProduct(t);
}

struct ModifiedDesign {
    Matrix w;
    Matrix wstar;
    BasisSpec basis;
};

inline ModifiedDesign make_modified_design(const Dataset& d, const BasisRequest& req = {}) {
    auto [w, spec] = build_basis(d.z, req, d.covariate_names);
    Matrix ws = modify_covariates(w, d.treatment);
    return {std::move(w), std::move(ws), std::move(spec)};
}

}  // namespace modcov
