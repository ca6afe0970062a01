#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "linthresh/operators.hpp"

namespace linthresh {

/// Penalty weights alpha_k >= lower_bound > 0.
class Weights {
public:
    Weights(Vector alpha, std::optional<double> lower_bound = std::nullopt)
        : alpha_(std::move(alpha)) {
        if (alpha_.size() == 0) throw ConfigError("weights must be non-empty");
        if (!alpha_.allFinite()) throw ConfigError("weights must be finite");
        lower_bound_ = lower_bound.value_or(alpha_.minCoeff());
        if (!(lower_bound_ > 0.0)) {
            throw ConfigError("weights lower bound must be positive, got " +
                              std::to_string(lower_bound_));
        }
        if (alpha_.minCoeff() < lower_bound_) {
            throw ConfigError("weight below declared lower bound");
        }
    }

    static Weights constant(Index n, double value) {
        return Weights(Vector::Constant(static_cast<Eigen::Index>(n), value));
    }

    const Vector& alpha() const noexcept { return alpha_; }
    double lower_bound() const noexcept { return lower_bound_; }
    Index size() const noexcept { return static_cast<Index>(alpha_.size()); }
    double operator[](Index k) const { return alpha_(static_cast<Eigen::Index>(k)); }

private:
    Vector alpha_;
    double lower_bound_ = 0.0;
};

enum class QNorm { one, two, inf };

inline QNorm dual(QNorm q) noexcept {
    switch (q) {
    case QNorm::one: return QNorm::inf;
    case QNorm::inf: return QNorm::one;
    default: return QNorm::two;
    }
}

inline std::string to_string(QNorm q) {
    switch (q) {
    case QNorm::one: return "1";
    case QNorm::two: return "2";
    default: return "inf";
    }
}

inline QNorm parse_qnorm(const std::string& s) {
    if (s == "1") return QNorm::one;
    if (s == "2") return QNorm::two;
    if (s == "inf" || s == "infinity") return QNorm::inf;
    throw ConfigError("unsupported block norm exponent '" + s + "' (expected 1, 2 or inf)");
}

template <class Derived>
double norm(const Eigen::MatrixBase<Derived>& x, QNorm q) {
    switch (q) {
    case QNorm::one: return x.template lpNorm<1>();
    case QNorm::two: return x.norm();
    default: return x.size() == 0 ? 0.0 : x.template lpNorm<Eigen::Infinity>();
    }
}

/// Norm |.| = ||.||_q on R^N for joint sparsity.
struct BlockNorm {
    QNorm q = QNorm::two;
    Index block_size = 1;

    QNorm dual_q() const noexcept { return dual(q); }
};

/// sign(w_k) * max(|w_k| - t_k, 0), with an exact zero whenever |w_k| <= t_k.
inline Vector soft_threshold(const Vector& w, const Vector& thresholds) {
    detail::require_length("soft_threshold: thresholds", w.size(), thresholds.size());
    Vector out(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        const double t = thresholds(k);
        if (!(t >= 0.0)) throw ConfigError("soft_threshold: negative threshold");
        const double a = std::abs(w(k));
        out(k) = a <= t ? 0.0 : std::copysign(a - t, w(k));
    }
    return out;
}

/// Euclidean projection onto {v : sum_k alpha_k |v_k| <= radius} by sorting the
/// breakpoints |u_k| / alpha_k.
inline Vector project_weighted_l1_ball(const Vector& u, const Weights& weights, double radius) {
    if (!(radius > 0.0)) throw ConfigError("l1-ball radius must be positive");
    detail::require_length("project_weighted_l1_ball: weights", u.size(),
                           static_cast<Eigen::Index>(weights.size()));
    const Vector& alpha = weights.alpha();
    double mass = 0.0;
    for (Eigen::Index k = 0; k < u.size(); ++k) mass += alpha(k) * std::abs(u(k));
    if (mass <= radius) return u;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(u.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(u(a)) / alpha(a) > std::abs(u(b)) / alpha(b);
    });

    double cum_mass = 0.0;
    double cum_sq = 0.0;
    double tau = 0.0;
    for (Eigen::Index k : order) {
        cum_mass += alpha(k) * std::abs(u(k));
        cum_sq += alpha(k) * alpha(k);
        const double candidate = (cum_mass - radius) / cum_sq;
        if (!(candidate < std::abs(u(k)) / alpha(k))) break;
        tau = candidate;
    }
    Vector out(u.size());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double a = std::abs(u(k)) - tau * alpha(k);
        out(k) = a <= 0.0 ? 0.0 : std::copysign(a, u(k));
    }
    return out;
}

inline Vector project_l1_ball(const Vector& x, double radius) {
    return project_weighted_l1_ball(x, Weights::constant(static_cast<Index>(x.size()), 1.0),
                                    radius);
}

/// Projection of one block onto the closed t-ball of the dual norm |.|_*.
inline Vector project_dual_ball(const Vector& x, double t, QNorm q) {
    if (!(t >= 0.0)) throw ConfigError("dual-ball radius must be non-negative");
    switch (dual(q)) {
    case QNorm::two: {
        const double n = x.norm();
        return n <= t ? Vector(x) : Vector(x * (t / n));
    }
    case QNorm::inf: return x.cwiseMax(-t).cwiseMin(t);
    default: return t == 0.0 ? Vector(Vector::Zero(x.size())) : project_l1_ball(x, t);
    }
}

/// Per-block (I - P_{|.|_* <= t_k})(w_k). Blocks are contiguous runs of
/// `norm.block_size` entries.
inline Vector block_threshold(const Vector& w, const Vector& thresholds, const BlockNorm& norm) {
    const auto n = static_cast<Eigen::Index>(norm.block_size);
    if (n < 1) throw ConfigError("block_threshold: block size must be at least 1");
    detail::require_length("block_threshold: thresholds per block", w.size() / n,
                           thresholds.size());
    detail::require_length("block_threshold: vector length", thresholds.size() * n, w.size());
    // scalar blocks: every q-norm is |.|
    if (n == 1) return soft_threshold(w, thresholds);
    Vector out(w.size());
    for (Eigen::Index k = 0; k < thresholds.size(); ++k) {
        const double t = thresholds(k);
        if (!(t >= 0.0)) throw ConfigError("block_threshold: negative threshold");
        const Vector x = w.segment(k * n, n);
        switch (norm.q) {
        case QNorm::two: {
            const double r = x.norm();
            out.segment(k * n, n) = r <= t ? Vector(Vector::Zero(n)) : Vector(x * (1.0 - t / r));
            break;
        }
        case QNorm::one:
            out.segment(k * n, n) = soft_threshold(x, Vector::Constant(n, t));
            break;
        default:
            out.segment(k * n, n) = x - project_dual_ball(x, t, norm.q);
            break;
        }
    }
    return out;
}

/// Phi(u) = sum_k alpha_k |u_k|.
struct WeightedL1 {
    Weights weights;
};

/// Phi(u) = sum_k alpha_k |u_k|_q over blocks u_k in R^N.
struct JointPenalty {
    Weights weights;
    BlockNorm norm;
};

/// Phi = indicator of {u : sum_k alpha_k |u_k| <= radius}.
struct L1BallIndicator {
    Weights weights;
    double radius = 1.0;
};

using Penalty = std::variant<WeightedL1, JointPenalty, L1BallIndicator>;

/// Relative slack used when testing membership in the weighted l1-ball.
inline constexpr double ball_feasibility_slack = 1e-12;

/// Length of the coefficient vector the penalty acts on.
inline Index penalty_dimension(const Penalty& penalty) {
    return std::visit(
        [](const auto& p) -> Index {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, JointPenalty>) {
                return p.weights.size() * p.norm.block_size;
            } else {
                return p.weights.size();
            }
        },
        penalty);
}

inline const Weights& penalty_weights(const Penalty& penalty) {
    return std::visit([](const auto& p) -> const Weights& { return p.weights; }, penalty);
}

inline double weighted_l1_mass(const Vector& u, const Weights& w) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < u.size(); ++k) sum += w.alpha()(k) * std::abs(u(k));
    return sum;
}

/// Phi(u); the indicator returns +inf outside the ball.
inline double penalty_value(const Penalty& penalty, const Vector& u) {
    detail::require_length("penalty_value", static_cast<Eigen::Index>(penalty_dimension(penalty)),
                           u.size());
    return std::visit(
        [&](const auto& p) -> double {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, WeightedL1>) {
                return weighted_l1_mass(u, p.weights);
            } else if constexpr (std::is_same_v<P, JointPenalty>) {
                const auto n = static_cast<Eigen::Index>(p.norm.block_size);
                double sum = 0.0;
                for (Index k = 0; k < p.weights.size(); ++k) {
                    sum += p.weights[k] *
                           norm(u.segment(static_cast<Eigen::Index>(k) * n, n), p.norm.q);
                }
                return sum;
            } else {
                return weighted_l1_mass(u, p.weights) <= p.radius * (1.0 + ball_feasibility_slack)
                           ? 0.0
                           : unbounded;
            }
        },
        penalty);
}

/// J_s(u - s * grad) where J_s is the proximity operator of s * Phi.
inline Vector prox_step(const Vector& u, const Vector& grad, double s, const Penalty& penalty) {
    if (!(s > 0.0)) throw ConfigError("prox_step: step size must be positive");
    detail::require_length("prox_step: gradient", u.size(), grad.size());
    detail::require_length("prox_step: penalty dimension",
                           static_cast<Eigen::Index>(penalty_dimension(penalty)), u.size());
    const Vector z = u - s * grad;
    return std::visit(
        [&](const auto& p) -> Vector {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, WeightedL1>) {
                return soft_threshold(z, s * p.weights.alpha());
            } else if constexpr (std::is_same_v<P, JointPenalty>) {
                return block_threshold(z, s * p.weights.alpha(), p.norm);
            } else {
                // Scale-invariant: the prox of s * indicator is the projection.
                return project_weighted_l1_ball(z, p.weights, p.radius);
            }
        },
        penalty);
}

} // namespace linthresh
