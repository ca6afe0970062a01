#pragma once

#include <cmath>
#include <variant>

#include "linthresh/operators.hpp"
#include "linthresh/prox.hpp"

namespace linthresh {

/// min_u  ||K u - f||^2 / 2 + Phi(u)  on a finite truncation of l2.
///
/// The smooth part F(u) = ||Ku - f||^2 / 2 has F'(u) = K^*(Ku - f), Lipschitz with
/// constant ||K||^2, which is estimated once at construction.
class Problem {
public:
    Problem(DenseOperator op, Vector data, Penalty penalty, double norm_tol = 1e-12)
        : op_(std::move(op)), data_(std::move(data)), penalty_(std::move(penalty)) {
        detail::require_length("problem data length must equal operator rows",
                               static_cast<Eigen::Index>(op_.rows()), data_.size());
        detail::require_length("penalty dimension must equal operator cols",
                               static_cast<Eigen::Index>(op_.cols()),
                               static_cast<Eigen::Index>(penalty_dimension(penalty_)));
        if (!data_.allFinite()) throw ConfigError("problem data must be finite");
        try {
            lipschitz_ = operator_norm_sq(op_, norm_tol);
        } catch (const ConvergenceError&) {
            lipschitz_ = operator_norm_sq_dense(op_);
        }
    }

    const DenseOperator& op() const noexcept { return op_; }
    const Vector& data() const noexcept { return data_; }
    const Penalty& penalty() const noexcept { return penalty_; }
    Index truncation_dim() const noexcept { return op_.cols(); }

    /// Estimate of ||K||^2, used as the Lipschitz constant L of F'.
    double lipschitz() const noexcept { return lipschitz_; }

    template <class P>
    bool has_penalty() const noexcept {
        return std::holds_alternative<P>(penalty_);
    }

    Vector residual(const Vector& u) const { return op_.apply(u) - data_; }

private:
    DenseOperator op_;
    Vector data_;
    Penalty penalty_;
    double lipschitz_ = 0.0;
};

/// F(u) = ||Ku - f||^2 / 2
inline double smooth_part(const Problem& p, const Vector& u) {
    return 0.5 * p.residual(u).squaredNorm();
}

/// (F + Phi)(u); +inf for infeasible points of an indicator penalty.
inline double objective(const Problem& p, const Vector& u) {
    const double phi = penalty_value(p.penalty(), u);
    if (std::isinf(phi)) return unbounded;
    return smooth_part(p, u) + phi;
}

/// F'(u) = K^*(Ku - f)
inline Vector gradient(const Problem& p, const Vector& u) {
    return p.op().adjoint_apply(p.residual(u));
}

/// w = -F'(u); at a minimizer this is the subgradient of Phi certifying optimality.
inline Vector dual_vector(const Problem& p, const Vector& u) { return -gradient(p, u); }

/// D_s(u) = Phi(u) - Phi(v) + <F'(u), u - v> for v = J_s(u - s F'(u)).
inline double descent_D(const Problem& p, const Vector& u, const Vector& v) {
    const double phi_u = penalty_value(p.penalty(), u);
    const double phi_v = penalty_value(p.penalty(), v);
    if (std::isinf(phi_u) && std::isinf(phi_v)) return 0.0;
    return phi_u - phi_v + gradient(p, u).dot(u - v);
}

/// Bregman-like distance R(v) = <F'(u*), v - u*> + Phi(v) - Phi(u*).
inline double bregman_R(const Problem& p, const Vector& u_star, const Vector& v) {
    detail::require_length("bregman_R: v", u_star.size(), v.size());
    const double phi_v = penalty_value(p.penalty(), v);
    if (std::isinf(phi_v)) return unbounded;
    return gradient(p, u_star).dot(v - u_star) + phi_v - penalty_value(p.penalty(), u_star);
}

/// Taylor remainder T(v) = F(v) - F(u*) - <F'(u*), v - u*> = ||K(v - u*)||^2 / 2.
inline double taylor_T(const Problem& p, const Vector& u_star, const Vector& v) {
    detail::require_length("taylor_T: v", u_star.size(), v.size());
    return 0.5 * p.op().apply(v - u_star).squaredNorm();
}

/// Coefficient indices with a non-zero entry.
inline IndexSet support_of(const Vector& u) {
    IndexSet s;
    for (Eigen::Index k = 0; k < u.size(); ++k)
        if (u(k) != 0.0) s.push_back(static_cast<Index>(k));
    return s;
}

} // namespace linthresh
