#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "linthresh/csv.hpp"
#include "linthresh/operators.hpp"

namespace linthresh {

/// One row per iterate u^n. `step_size` and `descent` describe the step leaving
/// u^n and are absent on the final row; quantities relative to a reference
/// minimizer are absent when none was supplied.
struct TraceRow {
    std::size_t n = 0;
    std::optional<double> step_size;
    double objective = 0.0;
    std::optional<double> gap;
    std::optional<double> descent;
    std::optional<double> bregman;
    std::optional<double> taylor;
    std::optional<double> distance_to_ref;
    std::size_t support_size = 0;

    bool operator==(const TraceRow&) const = default;
};

struct IterationTrace {
    std::vector<TraceRow> rows;
    /// supports[n] = {k : u^n_k != 0}; kept beside the rows since the CSV only
    /// carries the support size.
    std::vector<IndexSet> supports;

    std::size_t size() const noexcept { return rows.size(); }
    bool empty() const noexcept { return rows.empty(); }

    std::vector<double> distances() const {
        std::vector<double> d;
        for (const auto& r : rows)
            if (r.distance_to_ref) d.push_back(*r.distance_to_ref);
        return d;
    }

    std::vector<double> gaps() const {
        std::vector<double> g;
        for (const auto& r : rows)
            if (r.gap) g.push_back(*r.gap);
        return g;
    }

    /// First n after which the support never changes again.
    std::size_t support_stabilization_step() const {
        if (supports.empty()) return 0;
        std::size_t n = supports.size() - 1;
        while (n > 0 && supports[n - 1] == supports.back()) --n;
        return n;
    }
};

inline constexpr const char* trace_csv_header =
    "n,s_n,objective,r_n,D_s,R,T,dist_to_ref,support_size";

namespace detail {

inline std::string opt_field(const std::optional<double>& v) {
    return v ? csv::format_double(*v) : std::string{};
}

inline std::optional<double> parse_opt(const std::string& field, std::size_t line) {
    if (field.empty()) return std::nullopt;
    double v = 0.0;
    if (!csv::detail::parse_double(field, v)) {
        throw ConfigError("trace csv line " + std::to_string(line) + ": bad number '" + field +
                          "'");
    }
    return v;
}

} // namespace detail

inline void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
    out << trace_csv_header << '\n';
    for (const auto& r : trace.rows) {
        out << r.n << ',' << detail::opt_field(r.step_size) << ','
            << csv::format_double(r.objective) << ',' << detail::opt_field(r.gap) << ','
            << detail::opt_field(r.descent) << ',' << detail::opt_field(r.bregman) << ','
            << detail::opt_field(r.taylor) << ',' << detail::opt_field(r.distance_to_ref) << ','
            << r.support_size << '\n';
    }
}

inline void write_trace_csv(const std::string& path, const IterationTrace& trace) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_trace_csv(out, trace);
}

/// Parses the output of write_trace_csv. Supports are not stored in the CSV.
inline IterationTrace read_trace_csv(std::istream& in) {
    IterationTrace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != trace_csv_header) throw ConfigError("trace csv: unexpected header");
            continue;
        }
        const auto f = csv::detail::split(line);
        if (f.size() != 9) {
            throw ConfigError("trace csv line " + std::to_string(line_no) + ": expected 9 fields");
        }
        TraceRow r;
        r.n = std::stoull(f[0]);
        r.step_size = detail::parse_opt(f[1], line_no);
        const auto obj = detail::parse_opt(f[2], line_no);
        if (!obj) throw ConfigError("trace csv: missing objective");
        r.objective = *obj;
        r.gap = detail::parse_opt(f[3], line_no);
        r.descent = detail::parse_opt(f[4], line_no);
        r.bregman = detail::parse_opt(f[5], line_no);
        r.taylor = detail::parse_opt(f[6], line_no);
        r.distance_to_ref = detail::parse_opt(f[7], line_no);
        r.support_size = std::stoull(f[8]);
        trace.rows.push_back(r);
    }
    return trace;
}

} // namespace linthresh
