#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "linthresh/problem.hpp"

namespace linthresh {

inline constexpr std::size_t oracle_max_cols = 12;

struct OracleResult {
    Vector minimizer;
    double objective = 0.0;
    std::size_t patterns = 0;          ///< sign patterns examined
    std::size_t feasible = 0;          ///< patterns satisfying all optimality conditions
    std::size_t singular_skipped = 0;  ///< supports whose normal equations were singular
};

/// Exact minimizer of ||Ku - f||^2/2 + sum alpha_k |u_k| by enumerating every
/// sign pattern in {-, 0, +}^cols.
///
/// For a pattern with support S and signs sigma, stationarity on S reads
/// K_S^* K_S u_S = K_S^* f - alpha_S sigma_S; the candidate is kept when the signs
/// agree and |(K^*(f - Ku))_k| <= alpha_k off S. Among kept candidates the one with
/// least objective is returned.
inline OracleResult oracle_minimizer(const Problem& p, double feas_tol = 1e-10) {
    const auto* pen = std::get_if<WeightedL1>(&p.penalty());
    if (!pen) throw ConfigError("oracle_minimizer: weighted l1 penalty required");
    const Index n = p.truncation_dim();
    if (n > oracle_max_cols) {
        throw ConfigError("oracle_minimizer: " + std::to_string(n) +
                          " columns exceed the enumeration budget of " +
                          std::to_string(oracle_max_cols));
    }
    const Matrix& K = p.op().matrix();
    const Matrix gram = K.transpose() * K;
    const Vector Ktf = K.transpose() * p.data();
    const Vector& alpha = pen->weights.alpha();
    const double scale = std::max(1.0, Ktf.lpNorm<Eigen::Infinity>());

    OracleResult out;
    out.objective = std::numeric_limits<double>::infinity();
    std::vector<int> pattern(n, -1); // -1, 0, +1 per coordinate
    std::size_t total = 1;
    for (Index i = 0; i < n; ++i) total *= 3;

    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        IndexSet S;
        for (Index i = 0; i < n; ++i) {
            pattern[i] = static_cast<int>(c % 3) - 1;
            c /= 3;
            if (pattern[i] != 0) S.push_back(i);
        }
        ++out.patterns;
        Vector u = Vector::Zero(static_cast<Eigen::Index>(n));
        if (!S.empty()) {
            const auto m = static_cast<Eigen::Index>(S.size());
            if (m > K.rows()) {
                ++out.singular_skipped;
                continue;
            }
            // Normal equations solved through a QR factorization of K_S:
            // K_S P = Q R  =>  R z = (Q^* f)_head - R^{-*} P^* (alpha sigma),  u_S = P z.
            const Matrix KS = p.op().columns(S);
            Eigen::ColPivHouseholderQR<Matrix> qr(KS);
            qr.setThreshold(1e-12);
            if (qr.rank() < m) {
                ++out.singular_skipped;
                continue;
            }
            Vector shift(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                shift(a) = alpha(static_cast<Eigen::Index>(S[a])) * pattern[S[a]];
            }
            const Vector qtf = (qr.householderQ().transpose() * p.data()).head(m);
            const auto R = qr.matrixR().topLeftCorner(m, m).template triangularView<Eigen::Upper>();
            const Vector y = R.transpose().solve(qr.colsPermutation().transpose() * shift);
            const Vector uS = qr.colsPermutation() * Vector(R.solve(qtf - y));
            bool signs_ok = true;
            for (Eigen::Index a = 0; a < m; ++a) {
                if (uS(a) * pattern[S[a]] <= 0.0) {
                    signs_ok = false;
                    break;
                }
                u(static_cast<Eigen::Index>(S[a])) = uS(a);
            }
            if (!signs_ok) continue;
        }
        const Vector w = Ktf - gram * u;
        bool dual_ok = true;
        for (Index i = 0; i < n && dual_ok; ++i) {
            if (pattern[i] == 0 &&
                std::abs(w(static_cast<Eigen::Index>(i))) > alpha(static_cast<Eigen::Index>(i)) + feas_tol * scale) {
                dual_ok = false;
            }
        }
        if (!dual_ok) continue;
        ++out.feasible;
        const double obj = objective(p, u);
        if (obj < out.objective) {
            out.objective = obj;
            out.minimizer = u;
        }
    }
    if (out.feasible == 0) {
        throw Error("oracle_minimizer: no sign pattern satisfied the optimality conditions");
    }
    return out;
}

} // namespace linthresh
