#pragma once

// JSON serialization of reports and certificates. Requires nlohmann/json.

#include <cmath>
#include <nlohmann/json.hpp>

#include "linthresh/diagnostics.hpp"
#include "linthresh/operators.hpp"

namespace linthresh::report {

using json = nlohmann::json;

/// JSON has no infinities or NaN; they are written as strings.
inline json number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline json numbers(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

inline json to_json(const SpectralReport& r) {
    return json{{"operator_norm_sq", number(r.operator_norm_sq)},
                {"sigma", numbers(r.sigma)},
                {"mu", numbers(r.mu)},
                {"tolerance", r.tolerance},
                {"consistent", r.consistent()}};
}

inline json to_json(const FbiReport& r) {
    json supports = json::array();
    for (const auto& [s, v] : r.min_singular_by_support) {
        supports.push_back(json{{"support", s}, {"min_singular", number(v)}});
    }
    return json{{"order", r.order},
                {"threshold", r.threshold},
                {"passes", r.passes},
                {"min_value", number(r.min_value())},
                {"worst_support", r.worst_support()},
                {"checked", r.min_singular_by_support.size()},
                {"supports", supports}};
}

inline json to_json(const SupportAnalysis& a) {
    std::vector<double> w(a.w_star.data(), a.w_star.data() + a.w_star.size());
    json j{{"penalty", to_string(a.kind)},
           {"w_star", numbers(w)},
           {"active_set", a.active_set},
           {"support", a.support},
           {"rho", number(a.rho)},
           {"strict_pattern", a.strict_pattern},
           {"subspace_dim", a.subspace_dim},
           {"zero_off_active", a.zero_off_active},
           {"active_tol", a.active_tol},
           {"optimality_residual", number(a.optimality_residual)}};
    if (a.kind == PenaltyKind::l1_ball) {
        j["dual_scale"] = number(a.dual_scale);
        j["active_mass"] = number(a.active_mass);
        j["sign_agreement"] = a.sign_agreement;
        j["dual_nonzero"] = a.dual_nonzero;
    }
    return j;
}

inline json to_json(const RateCertificate& c) {
    json constants = json::object();
    for (const auto& [k, v] : c.constants) constants[k] = number(v);
    json j{{"kind", to_string(c.kind)},
           {"lambda", number(c.lambda)},
           {"subspace", c.subspace},
           {"constants", constants},
           {"notes", c.notes}};
    j["C"] = c.C ? number(*c.C) : json(nullptr);
    return j;
}

inline json to_json(const RateFit& f) {
    return json{{"lambda_hat", number(f.lambda_hat)}, {"C_hat", number(f.C_hat)},
                {"r_squared", number(f.r_squared)}, {"points", f.points},
                {"exact_zero", f.exact_zero},       {"geometric", f.geometric}};
}

inline json to_json(const SublinearReport& r) {
    return json{{"q", number(r.q)},
                {"bound", number(r.bound)},
                {"max_n_r", number(r.max_n_r)},
                {"checked", r.checked},
                {"step_violations", r.step_violations.size()},
                {"bound_violations", r.bound_violations.size()},
                {"passes", r.passes()}};
}

inline std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

} // namespace linthresh::report
