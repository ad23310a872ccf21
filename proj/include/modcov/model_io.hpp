#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "modcov/pipeline.hpp"

namespace modcov {

inline constexpr const char* kModelFormatVersion = "1.0";
inline constexpr const char* kToolVersion = "0.3.0";

/// FNV-1a 64-bit digest, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

struct Provenance {
    std::string input_digest;
    std::string tool_version = kToolVersion;
    std::string timestamp;
};

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Everything stored in a model file.
struct ModelDocument {
    std::string version = kModelFormatVersion;
    InteractionModel model;
    // penalty / selection metadata
    bool lambda_from_cv = false;
    int folds = 0;
    std::uint64_t seed = 0;
    bool one_se = false;
    AdaptiveMode adaptive = AdaptiveMode::none;
    std::optional<MainEffectModel> main_effect;
    Provenance provenance;
    std::optional<DatasetSummary> training;
};

inline ModelDocument make_document(const FitReport& rep, const FitOptions& opt, const Dataset& train,
                                   Provenance prov = {}) {
    ModelDocument doc;
    doc.model = rep.model;
    doc.lambda_from_cv = !opt.lambda.has_value();
    doc.folds = opt.folds;
    doc.seed = opt.seed;
    doc.one_se = opt.one_se;
    doc.adaptive = opt.adaptive;
    doc.main_effect = rep.main_effect;
    doc.provenance = std::move(prov);
    doc.training = summarize(train);
    return doc;
}

namespace detail {

using nlohmann::json;

inline json basis_to_json(const BasisSpec& b) {
    if (!b.transforms.empty())
        fail(ErrorKind::unsupported, "models with custom basis transforms cannot be serialized");
    return json{{"centered", b.centered}, {"scaled", b.scaled}, {"input_dim", b.input_dim},
                {"names", b.names},       {"centers", b.centers}, {"scales", b.scales}};
}

inline BasisSpec basis_from_json(const json& j) {
    BasisSpec b;
    b.centered = j.at("centered").get<bool>();
    b.scaled = j.at("scaled").get<bool>();
    b.input_dim = j.at("input_dim").get<Index>();
    b.names = j.at("names").get<std::vector<std::string>>();
    b.centers = j.at("centers").get<std::vector<double>>();
    b.scales = j.at("scales").get<std::vector<double>>();
    if (b.centers.size() != b.scales.size() || static_cast<Index>(b.centers.size()) != b.input_dim)
        fail(ErrorKind::incompatible, "model basis is inconsistent");
    return b;
}

inline json vec(const Vector& v) { return to_std(v); }
inline Vector vec(const json& j) { return from_std(j.get<std::vector<double>>()); }

inline int major_version(const std::string& v) {
    const auto dot = v.find('.');
    try {
        return std::stoi(v.substr(0, dot));
    } catch (...) {
        fail(ErrorKind::incompatible, "unreadable model format version '" + v + "'");
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelDocument& doc) {
    using nlohmann::json;
    const InteractionModel& m = doc.model;
    json coef = json::array();
    std::vector<std::string> names{"(intercept)"};
    for (const auto& n : m.basis.names) names.push_back(n);
    for (Index j = 0; j < m.gamma.size(); ++j)
        coef.push_back({{"name", j < static_cast<Index>(names.size()) ? names[static_cast<size_t>(j)] : "w" + std::to_string(j)},
                        {"value", m.gamma[j]}});
    json j{{"format_version", doc.version},
           {"family", to_string(m.family)},
           {"method", to_string(m.method)},
           {"link", to_string(m.link)},
           {"orientation", m.orientation()},
           {"coefficients", coef},
           {"basis", detail::basis_to_json(m.basis)},
           {"raw_coefficients", {{"names", m.raw_names}, {"values", detail::vec(m.raw_coefficients)}}},
           {"penalty",
            {{"lambda", m.lambda},
             {"lambda_from_cv", doc.lambda_from_cv},
             {"multipliers", detail::vec(m.multipliers)},
             {"exempt_first", m.exempt_first},
             {"adaptive", to_string(doc.adaptive)},
             {"folds", doc.folds},
             {"seed", doc.seed},
             {"one_se", doc.one_se}}},
           {"provenance",
            {{"input_digest", doc.provenance.input_digest},
             {"tool_version", doc.provenance.tool_version},
             {"timestamp", doc.provenance.timestamp}}}};
    if (doc.main_effect) {
        const auto& me = *doc.main_effect;
        json mj{{"family", to_string(me.family)},
                {"xi", detail::vec(me.xi)},
                {"lambda", me.lambda},
                {"lambda_from_cv", me.lambda_from_cv},
                {"basis", detail::basis_to_json(me.basis)}};
        if (me.tau) mj["tau"] = *me.tau;
        j["main_effect"] = mj;
    }
    if (doc.training) {
        const auto& t = *doc.training;
        j["training"] = {{"n", t.n}, {"q", t.q}, {"treated", t.treated}, {"control", t.control}, {"events", t.events}};
    }
    return j;
}

inline ModelDocument from_json(const nlohmann::json& j) {
    ModelDocument doc;
    try {
        doc.version = j.at("format_version").get<std::string>();
        if (detail::major_version(doc.version) != detail::major_version(kModelFormatVersion))
            fail(ErrorKind::incompatible, "unsupported model format version " + doc.version + " (this build reads " +
                                              kModelFormatVersion + ")");
        InteractionModel& m = doc.model;
        m.family = parse_family(j.at("family").get<std::string>());
        m.method = parse_method(j.at("method").get<std::string>());
        m.link = parse_link(j.at("link").get<std::string>());
        const auto& coef = j.at("coefficients");
        m.gamma.resize(static_cast<Index>(coef.size()));
        for (size_t k = 0; k < coef.size(); ++k) m.gamma[static_cast<Index>(k)] = coef[k].at("value").get<double>();
        m.basis = detail::basis_from_json(j.at("basis"));
        if (m.basis.dim() != m.gamma.size())
            fail(ErrorKind::incompatible, "model coefficients do not match its basis");
        m.raw_names = j.at("raw_coefficients").at("names").get<std::vector<std::string>>();
        m.raw_coefficients = detail::vec(j.at("raw_coefficients").at("values"));
        const auto& pen = j.at("penalty");
        m.lambda = pen.at("lambda").get<double>();
        m.multipliers = detail::vec(pen.at("multipliers"));
        m.exempt_first = pen.at("exempt_first").get<bool>();
        doc.lambda_from_cv = pen.at("lambda_from_cv").get<bool>();
        doc.adaptive = parse_adaptive_mode(pen.at("adaptive").get<std::string>());
        doc.folds = pen.at("folds").get<int>();
        doc.seed = pen.at("seed").get<std::uint64_t>();
        doc.one_se = pen.at("one_se").get<bool>();
        const auto& pv = j.at("provenance");
        doc.provenance.input_digest = pv.at("input_digest").get<std::string>();
        doc.provenance.tool_version = pv.at("tool_version").get<std::string>();
        doc.provenance.timestamp = pv.at("timestamp").get<std::string>();
        if (j.contains("main_effect")) {
            const auto& mj = j.at("main_effect");
            MainEffectModel me;
            me.family = parse_family(mj.at("family").get<std::string>());
            me.xi = detail::vec(mj.at("xi"));
            me.lambda = mj.at("lambda").get<double>();
            me.lambda_from_cv = mj.at("lambda_from_cv").get<bool>();
            me.basis = detail::basis_from_json(mj.at("basis"));
            if (mj.contains("tau")) me.tau = mj.at("tau").get<double>();
            doc.main_effect = std::move(me);
        }
        if (j.contains("training")) {
            const auto& t = j.at("training");
            DatasetSummary s;
            s.n = t.at("n").get<Index>();
            s.q = t.at("q").get<Index>();
            s.treated = t.at("treated").get<Index>();
            s.control = t.at("control").get<Index>();
            s.events = t.at("events").get<Index>();
            doc.training = s;
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::incompatible, std::string("malformed model file: ") + e.what());
    }
    return doc;
}

inline void save_model(const ModelDocument& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::invalid_input, "cannot write '" + path + "'");
    out << to_json(doc).dump(2) << "\n";
}

inline ModelDocument load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::invalid_input, "cannot open model '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::incompatible, std::string("model file is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

}  // namespace modcov
