#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "modcov/common.hpp"

namespace modcov {

/// Header plus string cells, as read from a delimited text file.
struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(std::string_view name) const {
        for (size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<int>(j);
        return -1;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::string trim(std::string s) {
    auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    size_t b = 0, e = s.size();
    while (b < e && issp(s[b])) ++b;
    while (e > b && issp(s[e - 1])) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

inline RawTable read_csv(std::istream& in) {
    RawTable t;
    std::string line;
    bool have_header = false;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
            line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        for (auto& c : cells) c = detail::trim(std::move(c));
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            fail(ErrorKind::invalid_input, "line " + std::to_string(lineno) + ": expected " +
                                               std::to_string(t.header.size()) + " fields, found " +
                                               std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) fail(ErrorKind::invalid_input, "empty CSV input (header required)");
    return t;
}

inline RawTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::invalid_input, "cannot open '" + path + "'");
    return read_csv(in);
}

/// Strict decimal parse: the whole cell must be a finite number.
inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace modcov
