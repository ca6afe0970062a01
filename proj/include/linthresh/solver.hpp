#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>

#include "linthresh/problem.hpp"
#include "linthresh/trace.hpp"

namespace linthresh {

/// s_n = s for every n; requires 0 < s < 2 / ||K||^2.
struct ConstantStep {
    double s = 1.0;
};

/// lower <= s_n <= upper < 2 / ||K||^2. `schedule` maps n to s_n and defaults to
/// the upper bound.
struct BoundedStep {
    double lower = 0.0;
    double upper = 0.0;
    std::function<double(std::size_t)> schedule;
};

/// A-posteriori acceptance: a trial s_n is kept iff
///   s_n ||K(u^{n+1} - u^n)||^2 <= 2 (1 - delta) ||u^{n+1} - u^n||^2.
/// Trials start at the previous accepted step times `growth`, shrink by
/// `backoff` on rejection and are floored at `lower`.
struct ConditionB {
    double lower = 0.0;
    double delta = 0.1;
    double growth = 1.5;
    double backoff = 0.5;
    std::optional<double> initial;
};

using StepSizeRule = std::variant<ConstantStep, BoundedStep, ConditionB>;

/// Bounds implied by a validated rule: s_lower <= s_n <= s_upper and the
/// descent factor delta of (F+Phi)(u^{n+1}) <= (F+Phi)(u^n) - delta D_{s_n}(u^n).
struct RuleBounds {
    double s_lower = 0.0;
    double s_upper = 0.0; ///< +inf for condition (B)
    double delta = 0.0;
};

/// 2 / L, with 2 / 0 = +inf.
inline double step_cap(double lipschitz) { return lipschitz > 0.0 ? 2.0 / lipschitz : unbounded; }

inline RuleBounds validate_rule(const StepSizeRule& rule, double lipschitz) {
    const double cap = step_cap(lipschitz);
    return std::visit(
        [&](const auto& r) -> RuleBounds {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, ConstantStep>) {
                if (!(r.s > 0.0) || !(r.s < cap)) {
                    throw ConfigError("constant step size must lie in (0, 2/||K||^2) = (0, " +
                                      std::to_string(cap) + "), got " + std::to_string(r.s));
                }
                return {r.s, r.s, 1.0 - r.s * lipschitz / 2.0};
            } else if constexpr (std::is_same_v<R, BoundedStep>) {
                if (!(r.lower > 0.0) || !(r.lower <= r.upper) || !(r.upper < cap)) {
                    throw ConfigError("bounded step sizes need 0 < lower <= upper < 2/||K||^2 = " +
                                      std::to_string(cap));
                }
                return {r.lower, r.upper, 1.0 - r.upper * lipschitz / 2.0};
            } else {
                if (!(r.delta > 0.0 && r.delta < 1.0)) {
                    throw ConfigError("condition (B) needs delta in (0, 1)");
                }
                if (!(r.lower > 0.0)) throw ConfigError("condition (B) needs lower > 0");
                if (r.lower * lipschitz > 2.0 * (1.0 - r.delta)) {
                    throw ConfigError(
                        "condition (B) floor must satisfy lower * ||K||^2 <= 2 (1 - delta) so "
                        "that the floored step is always admissible");
                }
                if (!(r.growth >= 1.0) || !(r.backoff > 0.0 && r.backoff < 1.0)) {
                    throw ConfigError("condition (B) needs growth >= 1 and backoff in (0, 1)");
                }
                if (r.initial && !(*r.initial > 0.0)) {
                    throw ConfigError("condition (B) initial trial must be positive");
                }
                return {r.lower, unbounded, r.delta};
            }
        },
        rule);
}

struct SolverState {
    Vector iterate;
    std::size_t step_index = 0;
    double last_step_size = 0.0; ///< 0 before the first step
    Vector residual;             ///< K u^n - f
};

inline SolverState make_state(const Problem& p, const Vector& u0) {
    detail::require_length("initial iterate", static_cast<Eigen::Index>(p.truncation_dim()),
                           u0.size());
    return SolverState{u0, 0, 0.0, p.residual(u0)};
}

struct StepResult {
    SolverState state;
    double step_size = 0.0;
    std::size_t rejected_trials = 0;
};

namespace detail {

inline bool condition_b_holds(double s, const Vector& Kd, const Vector& d, double delta) {
    return s * Kd.squaredNorm() <= 2.0 * (1.0 - delta) * d.squaredNorm();
}

} // namespace detail

/// One generalized gradient projection step u^{n+1} = J_{s_n}(u^n - s_n F'(u^n)).
/// The rule is assumed validated against p.lipschitz().
inline StepResult step(const Problem& p, const SolverState& state, const StepSizeRule& rule) {
    const Vector grad = p.op().adjoint_apply(state.residual);
    const Vector& u = state.iterate;
    const std::size_t n = state.step_index;
    StepResult out;

    auto finish = [&](Vector v, double s) {
        if (!v.allFinite()) throw NumericalError("non-finite iterate", n + 1);
        out.step_size = s;
        Vector res = p.residual(v);
        out.state = SolverState{std::move(v), n + 1, s, std::move(res)};
        return out;
    };

    if (const auto* c = std::get_if<ConstantStep>(&rule)) {
        return finish(prox_step(u, grad, c->s, p.penalty()), c->s);
    }
    if (const auto* b = std::get_if<BoundedStep>(&rule)) {
        const double s = b->schedule ? b->schedule(n) : b->upper;
        if (!(s >= b->lower && s <= b->upper)) {
            throw NumericalError("bounded step schedule left [lower, upper]", n);
        }
        return finish(prox_step(u, grad, s, p.penalty()), s);
    }

    const auto& cb = std::get<ConditionB>(rule);
    double s = 0.0;
    if (state.last_step_size > 0.0) {
        s = state.last_step_size * cb.growth;
    } else if (cb.initial) {
        s = *cb.initial;
    } else {
        s = p.lipschitz() > 0.0 ? 2.0 * (1.0 - cb.delta) / p.lipschitz() : 1.0;
    }
    s = std::max(s, cb.lower);
    while (true) {
        Vector v = prox_step(u, grad, s, p.penalty());
        if (s <= cb.lower) return finish(std::move(v), cb.lower);
        const Vector d = v - u;
        if (detail::condition_b_holds(s, p.op().apply(d), d, cb.delta)) {
            return finish(std::move(v), s);
        }
        ++out.rejected_trials;
        s = std::max(s * cb.backoff, cb.lower);
    }
}

struct StoppingRule {
    std::size_t max_iters = 100000;
    double gap_tol = 0.0;  ///< on r_n, needs a reference minimizer
    double step_tol = 1e-10; ///< on ||u^{n+1} - u^n||
};

enum class StopReason { step_tol, gap_tol, max_iters };

inline std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::step_tol: return "step_tol";
    case StopReason::gap_tol: return "gap_tol";
    default: return "max_iters";
    }
}

/// Passed to the per-iteration callback after every accepted step.
struct StepEvent {
    std::size_t n;      ///< index of the iterate the step left
    const Vector& before;
    const Vector& after;
    double step_size;
    std::size_t rejected_trials;
    double descent; ///< D_{s_n}(u^n)
};

struct SolveOptions {
    std::optional<Vector> reference;
    std::function<void(const StepEvent&)> on_step;
};

struct SolveResult {
    SolverState state;
    IterationTrace trace;
    StopReason reason = StopReason::max_iters;
    RuleBounds bounds;
    std::size_t iterations = 0;
};

namespace detail {

inline TraceRow make_row(const Problem& p, std::size_t n, const Vector& u,
                         const std::optional<Vector>& ref, double ref_objective) {
    TraceRow row;
    row.n = n;
    row.objective = objective(p, u);
    row.support_size = support_of(u).size();
    if (ref) {
        row.gap = row.objective - ref_objective;
        row.bregman = bregman_R(p, *ref, u);
        row.taylor = taylor_T(p, *ref, u);
        row.distance_to_ref = (u - *ref).norm();
    }
    return row;
}

} // namespace detail

/// Runs the generalized gradient projection method from u0 until a stopping
/// criterion fires, recording the iteration trace.
inline SolveResult solve(const Problem& p, const Vector& u0, const StepSizeRule& rule,
                         const StoppingRule& stop, const SolveOptions& options = {}) {
    if (stop.max_iters == 0 && stop.step_tol <= 0.0 && stop.gap_tol <= 0.0) {
        throw ConfigError("stopping rule has no active criterion");
    }
    if (stop.gap_tol > 0.0 && !options.reference) {
        throw ConfigError("gap_tol needs a reference minimizer");
    }
    if (options.reference) {
        detail::require_length("reference minimizer", static_cast<Eigen::Index>(p.truncation_dim()),
                               options.reference->size());
    }
    if (std::isinf(penalty_value(p.penalty(), u0))) {
        throw ConfigError("initial iterate must have finite penalty value");
    }
    SolveResult result;
    result.bounds = validate_rule(rule, p.lipschitz());
    const double ref_objective = options.reference ? objective(p, *options.reference) : 0.0;

    SolverState state = make_state(p, u0);
    result.trace.rows.push_back(detail::make_row(p, 0, state.iterate, options.reference,
                                                 ref_objective));
    result.trace.supports.push_back(support_of(state.iterate));

    const std::size_t limit =
        stop.max_iters == 0 ? std::numeric_limits<std::size_t>::max() : stop.max_iters;
    while (state.step_index < limit) {
        StepResult next = step(p, state, rule);
        const double D = descent_D(p, state.iterate, next.state.iterate);
        auto& last = result.trace.rows.back();
        last.step_size = next.step_size;
        last.descent = D;
        if (options.on_step) {
            options.on_step(StepEvent{state.step_index, state.iterate, next.state.iterate,
                                      next.step_size, next.rejected_trials, D});
        }
        const double moved = (next.state.iterate - state.iterate).norm();
        state = std::move(next.state);
        result.trace.rows.push_back(detail::make_row(p, state.step_index, state.iterate,
                                                     options.reference, ref_objective));
        result.trace.supports.push_back(support_of(state.iterate));
        if (!std::isfinite(result.trace.rows.back().objective)) {
            throw NumericalError("objective became non-finite", state.step_index);
        }
        if (stop.step_tol > 0.0 && moved <= stop.step_tol) {
            result.reason = StopReason::step_tol;
            break;
        }
        if (stop.gap_tol > 0.0 && *result.trace.rows.back().gap <= stop.gap_tol) {
            result.reason = StopReason::gap_tol;
            break;
        }
        result.reason = StopReason::max_iters;
    }
    result.iterations = state.step_index;
    result.state = std::move(state);
    return result;
}

/// solve() restricted to joint-sparsity penalties.
inline SolveResult solve_joint(const Problem& p, const Vector& u0, const StepSizeRule& rule,
                               const StoppingRule& stop, const SolveOptions& options = {}) {
    if (!p.has_penalty<JointPenalty>()) throw ConfigError("solve_joint needs a joint penalty");
    return solve(p, u0, rule, stop, options);
}

struct BallSolveResult : SolveResult {
    /// w* = -K^*(Ku* - f) != 0 at the limit, i.e. the data is not reachable from
    /// inside the ball.
    bool data_outside_image = false;
};

/// Projected gradient for min ||Ku - f||^2 / 2 over the weighted l1-ball.
inline BallSolveResult solve_ball(const Problem& p, const Vector& u0, const StepSizeRule& rule,
                                  const StoppingRule& stop, const SolveOptions& options = {},
                                  double dual_tol = 1e-10) {
    if (!p.has_penalty<L1BallIndicator>()) throw ConfigError("solve_ball needs an l1-ball penalty");
    BallSolveResult out;
    static_cast<SolveResult&>(out) = solve(p, u0, rule, stop, options);
    const double scale = std::max(1.0, p.op().adjoint_apply(p.data()).norm());
    out.data_outside_image = dual_vector(p, out.state.iterate).norm() > dual_tol * scale;
    return out;
}

} // namespace linthresh
