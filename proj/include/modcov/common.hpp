#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace modcov {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Outcome family of a dataset and of the working model fitted to it.
enum class Family { gaussian, binomial, cox };

/// Which binary-outcome objective is fitted on the modified covariates.
enum class BinaryLink { risk_difference, relative_risk };

/// Category of a failure. The CLI maps these to exit codes.
enum class ErrorKind {
    invalid_input,    // malformed data, bad arguments
    non_convergence,  // a solver gave up
    incompatible,     // model/data mismatch
    unsupported,      // operation not defined for this family
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(ErrorKind::invalid_input, msg);
}

inline std::string to_string(Family f) {
    switch (f) {
        case Family::gaussian: return "gaussian";
        case Family::binomial: return "binomial";
        case Family::cox: return "cox";
    }
    return "?";
}

/// Accepts both the model names (gaussian/binomial/cox) and the outcome
/// names (continuous/binary/survival).
inline Family parse_family(std::string_view s) {
    if (s == "gaussian" || s == "continuous") return Family::gaussian;
    if (s == "binomial" || s == "binary") return Family::binomial;
    if (s == "cox" || s == "survival") return Family::cox;
    fail(ErrorKind::invalid_input, "unknown family '" + std::string(s) + "'");
}

inline std::string to_string(BinaryLink l) {
    return l == BinaryLink::risk_difference ? "riskdiff" : "relrisk";
}

inline BinaryLink parse_link(std::string_view s) {
    if (s == "riskdiff" || s == "risk_difference") return BinaryLink::risk_difference;
    if (s == "relrisk" || s == "relative_risk") return BinaryLink::relative_risk;
    fail(ErrorKind::invalid_input, "unknown link '" + std::string(s) + "'");
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

inline std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

/// Rows of `m` selected by `idx`, in the given order.
inline Matrix take_rows(const Matrix& m, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), m.cols());
    for (size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = m.row(idx[k]);
    return out;
}

inline Vector take(const Vector& v, const std::vector<Index>& idx) {
    if (v.size() == 0) return v;
    Vector out(static_cast<Index>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = v[idx[k]];
    return out;
}

}  // namespace modcov
