#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "linthresh/operators.hpp"

namespace linthresh::csv {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    errno = 0;
    char* end = nullptr;
    out = std::strtod(text.c_str(), &end);
    return end == text.c_str() + text.size() && errno != ERANGE;
}

} // namespace detail

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Parses rows of comma-separated numbers. A first line containing any
/// non-numeric field is treated as a header and skipped.
inline Matrix parse_matrix(std::istream& in, const std::string& source = "<stream>") {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto fields = detail::split(t);
        std::vector<double> values;
        values.reserve(fields.size());
        bool numeric = true;
        for (const auto& f : fields) {
            double v = 0.0;
            if (!detail::parse_double(f, v)) {
                numeric = false;
                break;
            }
            values.push_back(v);
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw ConfigError(source + ":" + std::to_string(line_no) + ": non-numeric field");
        }
        first = false;
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(rows.front().size()) + " fields, got " +
                              std::to_string(values.size()));
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ConfigError(source + ": no numeric rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline Matrix read_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    return parse_matrix(in, path);
}

/// A vector file is either a single column or a single row.
inline Vector read_vector(const std::string& path) {
    const Matrix m = read_matrix(path);
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0).transpose();
    throw ConfigError(path + ": expected a single row or column, got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

inline void write_matrix(const std::string& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_matrix(out, m);
}

inline void write_vector(const std::string& path, const Vector& v) {
    write_matrix(path, Matrix(v));
}

} // namespace linthresh::csv
