#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linthresh/operators.hpp"
#include "linthresh/problem.hpp"
#include "linthresh/solver.hpp"
#include "linthresh/trace.hpp"

namespace linthresh {

/// Default relative tolerance for membership in the active set I.
inline constexpr double default_active_tol = 1e-8;

enum class PenaltyKind { weighted_l1, joint, l1_ball };

inline PenaltyKind penalty_kind(const Penalty& p) {
    if (std::holds_alternative<WeightedL1>(p)) return PenaltyKind::weighted_l1;
    if (std::holds_alternative<JointPenalty>(p)) return PenaltyKind::joint;
    return PenaltyKind::l1_ball;
}

inline std::string to_string(PenaltyKind k) {
    switch (k) {
    case PenaltyKind::weighted_l1: return "weighted_l1";
    case PenaltyKind::joint: return "joint";
    default: return "l1_ball";
    }
}

/// Dual-side structure of a minimizer u*.
///
/// Indices refer to coefficients for the scalar penalties and to blocks for the
/// joint penalty. With ratio_k = |w*_k|_* / alpha_k (divided additionally by
/// ||alpha^{-1} w*||_inf for the ball constraint), I = {k : ratio_k >= 1 - active_tol}
/// and rho = sup_{k not in I} ratio_k (0 over an empty complement).
struct SupportAnalysis {
    PenaltyKind kind = PenaltyKind::weighted_l1;
    Vector w_star;
    IndexSet active_set;   ///< I; U_dual = {v : v_k = 0 for k in I}
    IndexSet support;      ///< {k : u*_k != 0}; U_support = {v : v_k = 0 if u*_k != 0}
    double rho = 0.0;
    bool strict_pattern = false;
    std::size_t subspace_dim = 0; ///< dim U_dual^perp = |I| (in blocks for joint)
    bool zero_off_active = true;  ///< u*_k = 0 for every k outside I
    double active_tol = default_active_tol;
    double optimality_residual = 0.0;
    double dual_scale = 1.0; ///< ||alpha^{-1} w*||_inf for the ball, 1 otherwise

    // Ball constraint only.
    double active_mass = 0.0;    ///< sum_{k in I} alpha_k |u*_k|
    bool sign_agreement = true;  ///< sign(u*_k) = sign(w*_k) where u*_k != 0
    bool dual_nonzero = true;    ///< w* != 0
};

/// ||u - J_s(u - s F'(u))|| / s with s = 1 / ||K||^2; zero exactly at minimizers.
inline double optimality_residual(const Problem& p, const Vector& u) {
    const double s = p.lipschitz() > 0.0 ? 1.0 / p.lipschitz() : 1.0;
    return (u - prox_step(u, gradient(p, u), s, p.penalty())).norm() / s;
}

namespace detail {

/// Coefficient indices covered by the given penalty indices (blocks expand).
inline IndexSet coefficient_columns(const Penalty& penalty, const IndexSet& indices) {
    if (const auto* j = std::get_if<JointPenalty>(&penalty)) {
        IndexSet cols;
        for (Index k : indices)
            for (Index i = 0; i < j->norm.block_size; ++i) cols.push_back(k * j->norm.block_size + i);
        return cols;
    }
    return indices;
}

} // namespace detail

inline SupportAnalysis support_analysis(const Problem& p, const Vector& u_star, double tol,
                                        double active_tol = default_active_tol) {
    SupportAnalysis a;
    a.kind = penalty_kind(p.penalty());
    a.active_tol = active_tol;
    a.optimality_residual = optimality_residual(p, u_star);
    if (!(a.optimality_residual <= tol)) {
        throw CertificateError("support_analysis: optimality residual " +
                               std::to_string(a.optimality_residual) + " exceeds tolerance " +
                               std::to_string(tol));
    }
    a.w_star = dual_vector(p, u_star);
    const Weights& weights = penalty_weights(p.penalty());
    const Index count = weights.size();

    std::vector<double> ratio(count);
    std::vector<bool> nonzero(count);
    Index block = 1;
    QNorm dual_q = QNorm::inf;
    if (const auto* j = std::get_if<JointPenalty>(&p.penalty())) {
        block = j->norm.block_size;
        dual_q = j->norm.dual_q();
    }
    for (Index k = 0; k < count; ++k) {
        const auto off = static_cast<Eigen::Index>(k * block);
        const auto len = static_cast<Eigen::Index>(block);
        ratio[k] = (block == 1 ? std::abs(a.w_star(off)) : norm(a.w_star.segment(off, len), dual_q)) /
                   weights[k];
        nonzero[k] = !u_star.segment(off, len).isZero(0.0);
        if (nonzero[k]) a.support.push_back(k);
    }

    double scale = 1.0;
    if (a.kind == PenaltyKind::l1_ball) {
        scale = count ? *std::max_element(ratio.begin(), ratio.end()) : 0.0;
        a.dual_scale = scale;
        a.dual_nonzero = scale > 0.0;
        if (!a.dual_nonzero) scale = 1.0;
    }
    a.rho = 0.0;
    for (Index k = 0; k < count; ++k) {
        const double r = ratio[k] / scale;
        if (a.dual_nonzero && r >= 1.0 - active_tol) {
            a.active_set.push_back(k);
        } else {
            a.rho = std::max(a.rho, r);
            if (nonzero[k]) a.zero_off_active = false;
        }
    }
    a.subspace_dim = a.active_set.size();
    a.strict_pattern = true;
    for (Index k = 0; k < count; ++k) {
        if (!nonzero[k] && std::binary_search(a.active_set.begin(), a.active_set.end(), k)) {
            a.strict_pattern = false;
        }
    }
    if (a.kind == PenaltyKind::l1_ball) {
        for (Index k : a.active_set) a.active_mass += weights[k] * std::abs(u_star(static_cast<Eigen::Index>(k)));
        for (Index k : a.support) {
            const auto i = static_cast<Eigen::Index>(k);
            if ((u_star(i) > 0.0) != (a.w_star(i) > 0.0)) a.sign_agreement = false;
        }
    }
    return a;
}

enum class CertificateKind { fbi_bregman_taylor, strict_pattern_contraction, compact_explicit, empirical };

inline std::string to_string(CertificateKind k) {
    switch (k) {
    case CertificateKind::fbi_bregman_taylor: return "fbi_bregman_taylor";
    case CertificateKind::strict_pattern_contraction: return "strict_pattern_contraction";
    case CertificateKind::compact_explicit: return "compact_explicit";
    default: return "empirical";
    }
}

/// ||u^n - u*|| <= C lambda^n, with the constants that produced it.
struct RateCertificate {
    CertificateKind kind = CertificateKind::empirical;
    double lambda = 1.0;
    std::optional<double> C; ///< absent for asymptotic certificates
    std::map<std::string, double> constants;
    std::string subspace; ///< which subspace U the constants refer to
    std::vector<std::string> notes;
};

/// Linear-rate constant from a quadratic growth bound ||u^n - u*||^2 <= c r_n and
/// sufficient descent with factor delta, step sizes bounded below by s_lower:
///   lambda = (1 - delta s c^{-1} / (2 s c^{-1} + 1))^{1/2}.
inline double descent_rate_lambda(double c, double delta, double s_lower) {
    const double x = s_lower / c;
    return std::sqrt(1.0 - delta * x / (2.0 * x + 1.0));
}

/// Constant c with ||v||_q >= c ||v||_2 on R^N.
inline double block_norm_lower_equivalence(const BlockNorm& norm) {
    return norm.q == QNorm::inf ? 1.0 / std::sqrt(static_cast<double>(norm.block_size)) : 1.0;
}

/// Certificate from the Bregman-Taylor estimate R + T >= c_2 ||v - u*||^2 under FBI.
///
/// M bounds (F + Phi) along the iterates; M = (F + Phi)(u^0) gives the gap
/// r_0 = M - (F + Phi)(u*) used for C.
inline RateCertificate certificate_fbi(const Problem& p, const Vector& u_star,
                                       const FbiReport& fbi, double M, const RuleBounds& bounds,
                                       double tol = 1e-6) {
    const SupportAnalysis a = support_analysis(p, u_star, tol);
    if (a.rho >= 1.0 - a.active_tol) throw CertificateError("certificate_fbi: rho >= 1");
    if (!a.zero_off_active) {
        throw CertificateError("certificate_fbi: minimizer is non-zero outside the active set");
    }
    const double L = p.lipschitz();
    const double alpha_lo = penalty_weights(p.penalty()).lower_bound();
    RateCertificate cert;
    cert.kind = CertificateKind::fbi_bregman_taylor;
    cert.subspace = "U_dual";

    double c1 = 0.0;
    switch (a.kind) {
    case PenaltyKind::weighted_l1:
        c1 = (1.0 - a.rho) * alpha_lo * alpha_lo / (M + 1.0);
        break;
    case PenaltyKind::joint: {
        const double c0 = block_norm_lower_equivalence(std::get<JointPenalty>(p.penalty()).norm);
        c1 = (1.0 - a.rho) * alpha_lo * alpha_lo * c0 * c0 / (M + 1.0);
        cert.constants["c0"] = c0;
        break;
    }
    case PenaltyKind::l1_ball: {
        if (!a.dual_nonzero) {
            throw CertificateError("certificate_fbi: w* = 0, data lies in K(Omega)");
        }
        const double radius = std::get<L1BallIndicator>(p.penalty()).radius;
        c1 = a.dual_scale * (1.0 - a.rho) * alpha_lo * alpha_lo / radius;
        cert.constants["dual_scale"] = a.dual_scale;
        break;
    }
    }

    const IndexSet cols = detail::coefficient_columns(p.penalty(), a.active_set);
    double c = 0.0;
    if (cols.empty()) {
        c = 1.0 / c1;
        cert.notes.push_back("empty active set: U_dual is the whole space");
    } else {
        if (cols.size() > fbi.order) {
            throw CertificateError("certificate_fbi: FBI order " + std::to_string(fbi.order) +
                                   " does not cover the active support of size " +
                                   std::to_string(cols.size()));
        }
        const auto sv = fbi.lookup(cols);
        if (!sv) {
            throw CertificateError("certificate_fbi: FBI report does not contain the active support");
        }
        if (!(*sv > fbi.threshold)) {
            throw CertificateError("certificate_fbi: K is not injective on the active support");
        }
        const double cbar = (*sv) * (*sv);
        c = (2.0 * L + cbar + 4.0 * c1) / (cbar * c1);
        cert.constants["cbar"] = cbar;
    }
    const double r0 = std::max(0.0, M - objective(p, u_star));
    cert.lambda = descent_rate_lambda(c, bounds.delta, bounds.s_lower);
    cert.C = std::sqrt(c * r0);
    cert.constants["c1"] = c1;
    cert.constants["c"] = c;
    cert.constants["c2"] = 1.0 / c;
    cert.constants["rho"] = a.rho;
    cert.constants["M"] = M;
    cert.constants["r0"] = r0;
    cert.constants["delta"] = bounds.delta;
    cert.constants["s_lower"] = bounds.s_lower;
    cert.constants["L"] = L;
    cert.constants["active_size"] = static_cast<double>(a.active_set.size());
    return cert;
}

/// Closed-form certificate for iterative soft-thresholding with u^0 = 0 and
/// s = 1 / ||K||^2, built from the head/tail spectrum of K.
inline RateCertificate certificate_compact(const SpectralReport& spec, const Weights& weights,
                                           double f_norm, double op_norm_sq) {
    RateCertificate cert;
    cert.kind = CertificateKind::compact_explicit;
    cert.subspace = "head";
    cert.notes.push_back("valid for u0 = 0 and constant step s = 1/||K||^2");
    const double a = weights.lower_bound();
    const double L = op_norm_sq;
    cert.constants["alpha_lower"] = a;
    cert.constants["f_norm"] = f_norm;
    cert.constants["L"] = L;
    cert.constants["step_size"] = L > 0.0 ? 1.0 / L : 1.0;
    if (f_norm == 0.0) {
        cert.lambda = 0.0;
        cert.C = 0.0;
        cert.constants["k0"] = 1.0;
        cert.notes.push_back("f = 0: minimizer is 0 and the iteration is stationary");
        return cert;
    }
    if (!(L > 0.0)) throw CertificateError("certificate_compact: K = 0");
    const double bound = a * a / (4.0 * f_norm * f_norm);
    std::size_t k0 = 0;
    for (std::size_t k = 1; k <= spec.k_max(); ++k) {
        if (spec.mu_at(k) <= bound) {
            k0 = k;
            break;
        }
    }
    if (k0 == 0) {
        throw CertificateError("certificate_compact: no k0 <= " + std::to_string(spec.k_max()) +
                               " with mu_k0 <= alpha^2/(4||f||^2); increase k_max");
    }
    const double sigma = spec.sigma_at(k0);
    if (!(sigma > 0.0)) {
        throw CertificateError("certificate_compact: sigma_k0 = 0, K is not injective on the head");
    }
    const double f2 = f_norm * f_norm;
    double lambda_sq = 0.0;
    double C = 0.0;
    double c = 0.0;
    if (std::isinf(sigma)) {
        lambda_sq = std::max(0.75, 1.0 - a * a / (4.0 * a * a + 2.0 * L * f2));
        C = f2 / (std::sqrt(2.0) * a);
        c = f2 / (a * a);
        cert.notes.push_back("k0 = 1: head subspace is empty, sigma_k0 = +inf limit");
    } else {
        lambda_sq = std::max(1.0 - sigma / (4.0 * sigma + 8.0 * L),
                             1.0 - sigma * a * a /
                                       (4.0 * sigma * a * a + 2.0 * (sigma + 2.0 * L) * L * f2));
        C = std::sqrt((4.0 * a * a * f2 + (sigma + 2.0 * L) * f2 * f2) / (2.0 * sigma * a * a));
        c = std::max(4.0 / sigma, (sigma + 2.0 * L) * f2 / (sigma * a * a));
    }
    cert.lambda = std::sqrt(lambda_sq);
    cert.C = C;
    cert.constants["k0"] = static_cast<double>(k0);
    cert.constants["sigma_k0"] = sigma;
    cert.constants["mu_k0"] = spec.mu_at(k0);
    cert.constants["c"] = c;
    cert.constants["delta"] = 0.5;
    return cert;
}

/// Asymptotic certificate for iterative soft-thresholding converging to a
/// minimizer with strict sparsity pattern, valid once the support has frozen.
///
/// With S = {k : u*_k != 0} (U_support^perp = span{e_k : k in S}) the iteration
/// becomes affine with linear part I - s_n P K^*K P; c is the smallest positive
/// eigenvalue of K_S^* K_S and lambda = max(s_upper ||K||^2 - 1, 1 - s_lower c).
inline RateCertificate certificate_strict_pattern(const Problem& p, const SupportAnalysis& analysis,
                                                  const RuleBounds& bounds) {
    if (analysis.kind != PenaltyKind::weighted_l1) {
        throw CertificateError("certificate_strict_pattern: weighted l1 penalty required");
    }
    if (!analysis.strict_pattern) {
        throw CertificateError("certificate_strict_pattern: minimizer has no strict sparsity pattern");
    }
    if (std::isinf(bounds.s_upper)) {
        throw CertificateError("certificate_strict_pattern: step sizes must be bounded above");
    }
    RateCertificate cert;
    cert.kind = CertificateKind::strict_pattern_contraction;
    cert.subspace = "U_support";
    cert.notes.push_back("asymptotic rate after the support freezes");
    const double L = p.lipschitz();
    cert.constants["L"] = L;
    cert.constants["s_lower"] = bounds.s_lower;
    cert.constants["s_upper"] = bounds.s_upper;
    cert.constants["support_size"] = static_cast<double>(analysis.support.size());
    if (analysis.support.empty()) {
        cert.lambda = 0.0;
        cert.constants["dim_V_perp"] = 0.0;
        cert.notes.push_back("u* = 0: iteration is stationary once frozen");
        return cert;
    }
    const Matrix Ks = p.op().columns(analysis.support);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(Ks.transpose() * Ks, Eigen::EigenvaluesOnly);
    const Vector& ev = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(1.0, ev.maxCoeff()) * static_cast<double>(ev.size());
    double c = unbounded;
    std::size_t kernel = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cutoff) c = std::min(c, ev(i));
        else ++kernel;
    }
    if (std::isinf(c)) throw CertificateError("certificate_strict_pattern: c = 0");
    cert.lambda = std::max(bounds.s_upper * L - 1.0, 1.0 - bounds.s_lower * c);
    cert.constants["c"] = c;
    cert.constants["dim_V"] = static_cast<double>(kernel);
    cert.constants["dim_V_perp"] = static_cast<double>(ev.size() - static_cast<Eigen::Index>(kernel));
    return cert;
}

/// (I - s P K^*K P)(u - u*) + u*, P the projection onto span{e_k : u*_k != 0}.
/// Equals the soft-thresholding step once the support and signs have frozen.
inline Vector frozen_affine_step(const Problem& p, const Vector& u_star, const Vector& u, double s) {
    Vector d = u - u_star;
    Vector pd = Vector::Zero(d.size());
    for (Eigen::Index k = 0; k < d.size(); ++k)
        if (u_star(k) != 0.0) pd(k) = d(k);
    Vector kk = p.op().adjoint_apply(p.op().apply(pd));
    for (Eigen::Index k = 0; k < d.size(); ++k)
        if (u_star(k) == 0.0) kk(k) = 0.0;
    return d - s * kk + u_star;
}

struct RateFit {
    double lambda_hat = 0.0;
    double C_hat = 0.0;
    double r_squared = 1.0;
    std::size_t points = 0;
    bool exact_zero = false; ///< the sequence reached 0; lambda_hat reported as 0
    bool geometric = true;   ///< r_squared >= geometric_r2_threshold
};

inline constexpr double geometric_r2_threshold = 0.99;

/// Least-squares fit of log d_n = log C + n log lambda over burn_in <= n, stopping
/// at the first value below `floor_rel * max d` (round-off plateau).
inline RateFit fit_rate(const std::vector<double>& d, std::size_t burn_in,
                        double floor_rel = 1e-10) {
    RateFit fit;
    double dmax = 0.0;
    for (double x : d) dmax = std::max(dmax, x);
    const double floor = floor_rel * dmax;
    if (!d.empty() && d.back() == 0.0) {
        // finite termination
        std::size_t z = d.size() - 1;
        while (z > 0 && d[z - 1] == 0.0) --z;
        fit.exact_zero = true;
        fit.lambda_hat = 0.0;
        fit.C_hat = d.front();
        fit.points = z;
        return fit;
    }
    std::vector<double> xs, ys;
    for (std::size_t n = burn_in; n < d.size(); ++n) {
        if (d[n] == 0.0) {
            fit.exact_zero = true;
            break;
        }
        if (d[n] < 0.0) throw ConfigError("fit_rate: negative distance");
        if (d[n] <= floor) break;
        xs.push_back(static_cast<double>(n));
        ys.push_back(std::log(d[n]));
    }
    if (fit.exact_zero) {
        fit.lambda_hat = 0.0;
        fit.C_hat = xs.empty() ? 0.0 : std::exp(ys.front());
        fit.points = xs.size();
        return fit;
    }
    if (xs.size() < 5) {
        throw ConfigError("fit_rate: fewer than 5 usable points after burn-in " +
                          std::to_string(burn_in));
    }
    const double m = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (intercept + slope * xs[i]);
        ss_res += e * e;
    }
    fit.lambda_hat = std::exp(slope);
    fit.C_hat = std::exp(intercept);
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    fit.points = xs.size();
    fit.geometric = fit.r_squared >= geometric_r2_threshold;
    return fit;
}

/// Burn-in past the pre-asymptotic phase: max(10, step at which the support stabilizes).
inline std::size_t default_burn_in(const IterationTrace& trace) {
    return std::max<std::size_t>(10, trace.support_stabilization_step());
}

/// Fits distance_to_ref if present, otherwise sqrt(r_n).
inline RateFit fit_rate(const IterationTrace& trace, std::optional<std::size_t> burn_in = std::nullopt,
                        double floor_rel = 1e-10) {
    std::vector<double> d = trace.distances();
    if (d.size() != trace.size()) {
        d.clear();
        for (const auto& r : trace.rows) {
            if (!r.gap) throw ConfigError("fit_rate: trace has neither distances nor gaps");
            d.push_back(std::sqrt(std::max(0.0, *r.gap)));
        }
    }
    return fit_rate(d, burn_in.value_or(default_burn_in(trace)), floor_rel);
}

/// Inputs of the O(1/n) bound: q = (delta / (sqrt(r0) + sqrt(delta / s_lower) C1))^2.
struct SublinearConstants {
    double r0 = 0.0;
    double delta = 0.0;
    double s_lower = 0.0;
    double C1 = 0.0; ///< bound on ||u^n - u*|| along the run

    double q() const {
        const double den = std::sqrt(r0) + std::sqrt(delta / s_lower) * C1;
        return den > 0.0 ? (delta / den) * (delta / den) : unbounded;
    }
};

/// A-priori constants for a run started at u0 with M = (F + Phi)(u0).
/// C1 bounds ||u^n - u*|| through ||u^n||_2 <= Phi(u^n) / alpha_lower <= M / alpha_lower.
inline SublinearConstants sublinear_constants(const Problem& p, const Vector& u0,
                                              const Vector& u_star, const RuleBounds& bounds) {
    SublinearConstants k;
    const double M = objective(p, u0);
    k.r0 = std::max(0.0, M - objective(p, u_star));
    k.delta = bounds.delta;
    k.s_lower = bounds.s_lower;
    const double a = penalty_weights(p.penalty()).lower_bound();
    switch (penalty_kind(p.penalty())) {
    case PenaltyKind::weighted_l1: k.C1 = M / a + u_star.norm(); break;
    case PenaltyKind::joint:
        k.C1 = M / (a * block_norm_lower_equivalence(std::get<JointPenalty>(p.penalty()).norm)) +
               u_star.norm();
        break;
    case PenaltyKind::l1_ball:
        k.C1 = 2.0 * std::get<L1BallIndicator>(p.penalty()).radius / a;
        break;
    }
    return k;
}

struct SublinearReport {
    double q = 0.0;
    double bound = 0.0;    ///< 1 / q, bounds n r_n
    double max_n_r = 0.0;  ///< max over checked n of n r_n
    std::vector<std::size_t> step_violations; ///< n with q r_n^2 > r_n - r_{n+1} + slack
    std::vector<std::size_t> bound_violations; ///< n with n r_n > 1/q
    std::size_t checked = 0;
    bool passes() const { return step_violations.empty() && bound_violations.empty(); }
};

inline SublinearReport sublinear_check(const IterationTrace& trace, const SublinearConstants& k,
                                       std::size_t max_n = 10000, double slack = 1e-10) {
    std::vector<double> r;
    for (const auto& row : trace.rows) {
        if (!row.gap) throw ConfigError("sublinear_check: trace has no gap entries");
        r.push_back(*row.gap);
    }
    SublinearReport rep;
    rep.q = k.q();
    rep.bound = 1.0 / rep.q;
    const std::size_t last = std::min(r.size(), max_n + 1);
    for (std::size_t n = 0; n < last; ++n) {
        const double nr = static_cast<double>(n) * r[n];
        rep.max_n_r = std::max(rep.max_n_r, nr);
        if (nr > rep.bound * (1.0 + 1e-12) + slack) rep.bound_violations.push_back(n);
        if (n + 1 < r.size() && rep.q * r[n] * r[n] > r[n] - r[n + 1] + slack) {
            rep.step_violations.push_back(n);
        }
        ++rep.checked;
    }
    return rep;
}

} // namespace linthresh
