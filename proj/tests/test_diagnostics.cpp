#include <gtest/gtest.h>

#include <cmath>

#include "linthresh/diagnostics.hpp"
#include "linthresh/generators.hpp"
#include "linthresh/oracle.hpp"
#include "support/oracles.hpp"

using namespace linthresh;

namespace {

ConditionB condition_b(double lower, double delta) {
    ConditionB b;
    b.lower = lower;
    b.delta = delta;
    return b;
}

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

Problem scalar(double f, double alpha) {
    return Problem(DenseOperator::identity(1), vec({f}), WeightedL1{Weights::constant(1, alpha)});
}

StoppingRule tight(std::size_t max_iters = 500000, double step_tol = 1e-15) {
    StoppingRule s;
    s.max_iters = max_iters;
    s.step_tol = step_tol;
    return s;
}

Vector limit(const Problem& p, const StepSizeRule& rule) {
    return solve(p, Vector::Zero(static_cast<Eigen::Index>(p.truncation_dim())), rule, tight()).state.iterate;
}

/// Random point of the sublevel set {(F + Phi) <= M} near u*.
Vector sublevel_point(const Problem& p, const Vector& u_star, double M, oracle::Rng& rng) {
    for (double scale = 1.0;; scale *= 0.5) {
        const Vector v = u_star + scale * rng.vector(u_star.size());
        if (objective(p, v) <= M) return v;
    }
}

} // namespace

TEST(BregmanTaylor, ScalarExamples) {
    Problem p = scalar(2.0, 0.5);
    const Vector u = vec({1.5});
    EXPECT_EQ(bregman_R(p, u, u), 0.0);
    EXPECT_EQ(taylor_T(p, u, u), 0.0);
    // alpha (|v| - |u*|) - w* (v - u*) = 0.5 - 0.5 on the active ray
    EXPECT_NEAR(bregman_R(p, u, vec({2.5})), 0.0, 1e-15);
    // 0.5 * 1 - 0.5 * 1.5 - 0.5 * (-2.5)
    EXPECT_NEAR(bregman_R(p, u, vec({-1.0})), 1.0, 1e-15);
}

TEST(BregmanTaylor, IdentityTaylorIsHalfSquaredDistance) {
    oracle::Rng rng(1);
    Problem p(DenseOperator::identity(4), rng.vector(4), WeightedL1{Weights::constant(4, 0.3)});
    const Vector u = rng.vector(4), v = rng.vector(4);
    EXPECT_NEAR(taylor_T(p, u, v), 0.5 * (v - u).squaredNorm(), 1e-14);
}

TEST(BregmanTaylor, IdentityAndNonNegativity) {
    oracle::Rng rng(2);
    for (int inst = 0; inst < 5; ++inst) {
        Problem p(DenseOperator(rng.matrix(8, 6)), rng.vector(8), WeightedL1{Weights::constant(6, 0.1)});
        const Vector u_star = oracle_minimizer(p).minimizer;
        for (int t = 0; t < 100; ++t) {
            const Vector v = u_star + rng.vector(6);
            const double R = bregman_R(p, u_star, v), T = taylor_T(p, u_star, v);
            EXPECT_GE(R, -1e-12);
            EXPECT_GE(T, -1e-12);
            // the smooth part expands exactly; both sides evaluated independently
            const double lhs = R + T;
            const double rhs = objective(p, v) - objective(p, u_star);
            EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
        }
    }
}

TEST(BregmanTaylor, BallIndicator) {
    Problem p(DenseOperator::identity(2), vec({3, 0}), L1BallIndicator{Weights::constant(2, 1.0), 1.0});
    const Vector u = vec({1, 0});
    EXPECT_TRUE(std::isinf(bregman_R(p, u, vec({2, 0}))));
    // w* = (2, 0): R(v) = -<w*, v - u*> on feasible v
    EXPECT_NEAR(bregman_R(p, u, vec({0.5, 0.5})), 1.0, 1e-15);
}

TEST(SupportAnalysis, ScalarExamples) {
    SupportAnalysis a = support_analysis(scalar(2.0, 0.5), vec({1.5}), 1e-10);
    EXPECT_EQ(a.active_set, (IndexSet{0}));
    EXPECT_EQ(a.rho, 0.0);
    EXPECT_TRUE(a.strict_pattern);

    SupportAnalysis b = support_analysis(scalar(0.3, 0.5), vec({0.0}), 1e-10);
    EXPECT_TRUE(b.active_set.empty());
    EXPECT_NEAR(b.rho, 0.6, 1e-15);
    EXPECT_TRUE(b.strict_pattern);

    SupportAnalysis c = support_analysis(scalar(0.5, 0.5), vec({0.0}), 1e-10);
    EXPECT_EQ(c.active_set, (IndexSet{0}));
    EXPECT_FALSE(c.strict_pattern);

    EXPECT_THROW(support_analysis(scalar(2.0, 0.5), vec({1.0}), 1e-6), CertificateError);
}

TEST(SupportAnalysis, OffActiveBound) {
    // R(v) >= (1 - rho) alpha_lower sum_{k not in I} |v_k| - 1e-10
    oracle::Rng rng(3);
    Problem p(DenseOperator(rng.matrix(8, 6)), rng.vector(8), WeightedL1{Weights::constant(6, 0.5)});
    const Vector u_star = oracle_minimizer(p).minimizer;
    SupportAnalysis a = support_analysis(p, u_star, 1e-8);
    ASSERT_LT(a.active_set.size(), 6u);
    for (int t = 0; t < 100; ++t) {
        Vector v = u_star;
        double off = 0.0;
        for (Eigen::Index k = 0; k < 6; ++k) {
            if (!std::binary_search(a.active_set.begin(), a.active_set.end(), static_cast<Index>(k))) {
                v(k) = rng.normal();
                off += std::abs(v(k));
            }
        }
        EXPECT_GE(bregman_R(p, u_star, v), (1 - a.rho) * 0.5 * off - 1e-10);
    }
}

TEST(CertificateFbi, IdentityInstance) {
    Problem p(DenseOperator::identity(4), vec({1, -0.2, 0.7, 0.05}), WeightedL1{Weights::constant(4, 0.3)});
    const Vector u_star = oracle_minimizer(p).minimizer;
    const FbiReport fbi = fbi_check(p.op(), 4, std::nullopt, 1e-8);
    const RuleBounds b = validate_rule(ConstantStep{1.0}, p.lipschitz());
    const double M = objective(p, Vector::Zero(4));
    EXPECT_DOUBLE_EQ(M, 0.5 * p.data().squaredNorm());
    RateCertificate c = certificate_fbi(p, u_star, fbi, M, b);
    EXPECT_NEAR(c.constants.at("cbar"), 1.0, 1e-12);
    EXPECT_LT(c.lambda, 1.0);
    EXPECT_TRUE(std::isfinite(*c.C));
    EXPECT_EQ(c.subspace, "U_dual");
    const double c1 = (1 - c.constants.at("rho")) * 0.09 / (M + 1);
    EXPECT_DOUBLE_EQ(c.constants.at("c1"), c1);
    EXPECT_DOUBLE_EQ(c.constants.at("c"), (2.0 + 1.0 + 4 * c1) / c1);
    const double x = 1.0 / c.constants.at("c");
    EXPECT_DOUBLE_EQ(c.lambda, std::sqrt(1 - 0.5 * x / (2 * x + 1)));
}

TEST(CertificateFbi, Preconditions) {
    // boundary case: rho would be ignored but the minimizer has |w*| = alpha off support
    Problem p = scalar(0.5, 0.5);
    const FbiReport fbi = fbi_check(p.op(), 1, std::nullopt, 1e-8);
    const RuleBounds b = validate_rule(ConstantStep{1.0}, p.lipschitz());
    EXPECT_NO_THROW(certificate_fbi(p, vec({0.0}), fbi, 1.0, b));
    // active support not covered by the report
    DenseOperator K = gen::random_gaussian(8, 4, 3);
    Problem q(K, K.apply(vec({1, -1, 1, 0})), WeightedL1{Weights::constant(4, 0.01)});
    const Vector u_star = oracle_minimizer(q).minimizer;
    EXPECT_THROW(certificate_fbi(q, u_star, fbi_check(K, 1, std::nullopt, 1e-8), 1.0,
                                 validate_rule(ConstantStep{1.0 / q.lipschitz()}, q.lipschitz())),
                 CertificateError);
    // K not injective on the active set
    DenseOperator D = gen::duplicate_column(gen::random_gaussian(8, 3, 4), 0);
    Problem d(D, D.apply(vec({1, 0.5, 0, 1})), WeightedL1{Weights::constant(4, 0.05)});
    const Vector ud = limit(d, ConstantStep{1.0 / d.lipschitz()});
    EXPECT_THROW(certificate_fbi(d, ud, fbi_check(D, 4, std::nullopt, 1e-8), objective(d, Vector::Zero(4)),
                                 validate_rule(ConstantStep{1.0 / d.lipschitz()}, d.lipschitz())),
                 CertificateError);
}

TEST(CertificateFbi, LowerBoundsOnSublevelSets) {
    oracle::Rng rng(4);
    for (int inst = 0; inst < 5; ++inst) {
        Problem p(DenseOperator(rng.matrix(9, 6)), rng.vector(9), WeightedL1{Weights::constant(6, 0.1)});
        const Vector u_star = oracle_minimizer(p).minimizer;
        const double M = objective(p, Vector::Zero(6));
        const FbiReport fbi = fbi_check(p.op(), 6, std::nullopt, 1e-8);
        RateCertificate c = certificate_fbi(p, u_star, fbi, M, validate_rule(ConstantStep{1.0 / p.lipschitz()}, p.lipschitz()));
        const SupportAnalysis a = support_analysis(p, u_star, 1e-6);
        for (int t = 0; t < 100; ++t) {
            const Vector v = sublevel_point(p, u_star, M, rng);
            Vector pu = v - u_star;
            for (Index k : a.active_set) pu(static_cast<Eigen::Index>(k)) = 0.0;
            const double R = bregman_R(p, u_star, v), T = taylor_T(p, u_star, v);
            EXPECT_GE(R, c.constants.at("c1") * pu.squaredNorm() - 1e-9);
            EXPECT_GE(R + T, c.constants.at("c2") * (v - u_star).squaredNorm() - 1e-9);
        }
    }
}

TEST(CertificateFbi, JointAndBallLowerBounds) {
    oracle::Rng rng(5);
    for (QNorm q : {QNorm::one, QNorm::two, QNorm::inf}) {
        DenseOperator K(rng.matrix(10, 6));
        Problem p(K, rng.vector(10), JointPenalty{Weights::constant(3, 0.15), BlockNorm{q, 2}});
        const Vector u_star = limit(p, ConstantStep{1.0 / p.lipschitz()});
        const double M = objective(p, Vector::Zero(6));
        RateCertificate c = certificate_fbi(p, u_star, fbi_check(K, 6, std::nullopt, 1e-8), M,
                                            validate_rule(ConstantStep{1.0 / p.lipschitz()}, p.lipschitz()));
        for (int t = 0; t < 100; ++t) {
            const Vector v = sublevel_point(p, u_star, M, rng);
            EXPECT_GE(bregman_R(p, u_star, v) + taylor_T(p, u_star, v),
                      c.constants.at("c2") * (v - u_star).squaredNorm() - 1e-9)
                << to_string(q);
        }
    }
    DenseOperator K(rng.matrix(10, 6));
    Problem b(K, 3 * rng.vector(10), L1BallIndicator{Weights(vec({1, 1.5, 1, 2, 1, 1})), 1.0});
    const Vector u_star = limit(b, ConstantStep{1.0 / b.lipschitz()});
    RateCertificate c = certificate_fbi(b, u_star, fbi_check(K, 6, std::nullopt, 1e-8), objective(b, Vector::Zero(6)),
                                        validate_rule(ConstantStep{1.0 / b.lipschitz()}, b.lipschitz()));
    const SupportAnalysis a = support_analysis(b, u_star, 1e-6);
    for (int t = 0; t < 200; ++t) {
        Vector v = rng.vector(6);
        v = project_weighted_l1_ball(v, std::get<L1BallIndicator>(b.penalty()).weights, rng.uniform(0.1, 1.0));
        Vector pu = v - u_star;
        for (Index k : a.active_set) pu(static_cast<Eigen::Index>(k)) = 0.0;
        EXPECT_GE(bregman_R(b, u_star, v), c.constants.at("c1") * pu.squaredNorm() - 1e-9);
        EXPECT_GE(bregman_R(b, u_star, v) + taylor_T(b, u_star, v),
                  c.constants.at("c2") * (v - u_star).squaredNorm() - 1e-9);
    }
}

TEST(CertificateFbi, RateChainAlongIterates) {
    oracle::Rng rng(6);
    Problem p(DenseOperator(rng.matrix(8, 5)), rng.vector(8), WeightedL1{Weights::constant(5, 0.1)});
    const Vector u_star = oracle_minimizer(p).minimizer;
    const StepSizeRule rule = ConstantStep{1.0 / p.lipschitz()};
    SolveOptions opts;
    opts.reference = u_star;
    SolveResult r = solve(p, Vector::Zero(5), rule, tight(2000, 1e-14), opts);
    RateCertificate c = certificate_fbi(p, u_star, fbi_check(p.op(), 5, std::nullopt, 1e-8),
                                        objective(p, Vector::Zero(5)), r.bounds);
    const double cc = c.constants.at("c");
    for (std::size_t n = 0; n + 1 < r.trace.size(); ++n) {
        const double rn = std::max(0.0, *r.trace.rows[n].gap), rn1 = *r.trace.rows[n + 1].gap;
        const double d = *r.trace.rows[n].distance_to_ref;
        EXPECT_LE(d * d, cc * rn + 1e-12);
        EXPECT_LE(rn1, c.lambda * c.lambda * rn + 1e-12);
        EXPECT_LE(d, *c.C * std::pow(c.lambda, static_cast<double>(n)) + 1e-12);
    }
    const RateFit fit = fit_rate(r.trace);
    EXPECT_LE(fit.lambda_hat, c.lambda + 1e-6);
}

TEST(CertificateCompact, WorkedExample) {
    SpectralReport s;
    s.operator_norm_sq = 1.0;
    s.sigma = {unbounded, 1.0};
    s.mu = {1.0, 0.25};
    RateCertificate c = certificate_compact(s, Weights::constant(1, 1.0), 1.0, 1.0);
    EXPECT_DOUBLE_EQ(c.lambda, std::sqrt(11.0 / 12.0));
    EXPECT_EQ(c.constants.at("k0"), 2.0);
    EXPECT_DOUBLE_EQ(*c.C, std::sqrt((4.0 + 3.0) / 2.0));
}

TEST(CertificateCompact, DiagonalOperator) {
    const Vector d = vec({1, 0.5, 0.1, 0.01});
    const DenseOperator K = DenseOperator::diagonal(d);
    SpectralReport s = spectral_report(K, 4, 1e-12);
    RateCertificate c = certificate_compact(s, Weights::constant(4, 1.0), 1.0, s.operator_norm_sq);
    EXPECT_EQ(c.constants.at("k0"), 2.0);
    EXPECT_DOUBLE_EQ(c.constants.at("sigma_k0"), 1.0);
    EXPECT_NEAR(c.lambda, std::sqrt(11.0 / 12.0), 1e-15);

    // fitted rate on a run with nonzero minimizer respects the closed form
    const DenseOperator K8 = gen::diagonal_decay(8, 0.5);
    Vector f = Vector::Zero(8);
    f.head(4) = vec({1, 0.5, 0.1, 0.05});
    Problem p(K8, f, WeightedL1{Weights::constant(8, 0.05)});
    SpectralReport s2 = spectral_report(K8, 8, 1e-12);
    RateCertificate c2 = certificate_compact(s2, Weights::constant(8, 0.05), f.norm(), p.lipschitz());
    EXPECT_EQ(c2.constants.at("k0"), 7.0);
    SolveOptions opts;
    opts.reference = oracle_minimizer(p).minimizer;
    SolveResult r = solve(p, Vector::Zero(8), ConstantStep{1.0 / p.lipschitz()}, tight(200000, 1e-15), opts);
    EXPECT_LE(fit_rate(r.trace).lambda_hat, c2.lambda + 1e-6);
    const auto dist = r.trace.distances();
    for (std::size_t n = 0; n < dist.size(); ++n) {
        EXPECT_LE(dist[n], *c2.C * std::pow(c2.lambda, static_cast<double>(n)) + 1e-12);
    }
}

TEST(CertificateCompact, EdgeCases) {
    SpectralReport s = spectral_report(DenseOperator::identity(2), 2, 1e-12);
    RateCertificate zero = certificate_compact(s, Weights::constant(2, 1.0), 0.0, 1.0);
    EXPECT_EQ(zero.lambda, 0.0);
    EXPECT_EQ(*zero.C, 0.0);
    // k0 = 1 uses the sigma = +inf limit
    RateCertificate inf = certificate_compact(s, Weights::constant(2, 10.0), 1.0, 1.0);
    EXPECT_EQ(inf.constants.at("k0"), 1.0);
    EXPECT_DOUBLE_EQ(inf.lambda, std::sqrt(std::max(0.75, 1 - 100.0 / (400.0 + 2.0))));
    EXPECT_THROW(certificate_compact(s, Weights::constant(2, 0.1), 1.0, 1.0), CertificateError);
}

TEST(CertificateStrict, Examples) {
    Problem id(DenseOperator::identity(3), vec({1, 0.2, -2}), WeightedL1{Weights::constant(3, 0.5)});
    SupportAnalysis a = support_analysis(id, vec({0.5, 0, -1.5}), 1e-10);
    RateCertificate c = certificate_strict_pattern(id, a, validate_rule(ConstantStep{1.0}, 1.0));
    EXPECT_NEAR(c.constants.at("c"), 1.0, 1e-14);
    EXPECT_NEAR(c.lambda, 0.0, 1e-14);
    EXPECT_FALSE(c.C.has_value());
    EXPECT_EQ(c.subspace, "U_support");

    Problem one(DenseOperator(Matrix::Constant(1, 1, 2.0)), vec({3}), WeightedL1{Weights::constant(1, 0.5)});
    const Vector u = vec({(6 - 0.5) / 4});
    SupportAnalysis b = support_analysis(one, u, 1e-10);
    const double s = 0.3;
    RateCertificate c1 = certificate_strict_pattern(one, b, validate_rule(ConstantStep{s}, one.lipschitz()));
    EXPECT_NEAR(c1.lambda, std::abs(1 - s * 4), 1e-14);

    SupportAnalysis boundary = support_analysis(scalar(0.5, 0.5), vec({0.0}), 1e-10);
    EXPECT_THROW(certificate_strict_pattern(scalar(0.5, 0.5), boundary, validate_rule(ConstantStep{1.0}, 1.0)),
                 CertificateError);
    EXPECT_THROW(certificate_strict_pattern(id, a, validate_rule(condition_b(0.5, 0.1), 1.0)), CertificateError);
}

TEST(CertificateStrict, DuplicateColumnsFreezeAndContract) {
    const DenseOperator K = gen::duplicate_column(gen::random_gaussian(10, 5, 7), 2);
    const Vector f = K.apply(vec({1, -1, 0, 0.5, 0, 0}));
    Problem p(K, f, WeightedL1{Weights::constant(6, 0.05)});
    EXPECT_FALSE(fbi_check(K, 2, std::nullopt, 1e-8).passes);
    const double s = 1.0 / p.lipschitz();
    const Vector u_star = limit(p, ConstantStep{s});
    SupportAnalysis a = support_analysis(p, u_star, 1e-8);
    ASSERT_TRUE(a.strict_pattern);
    RateCertificate c = certificate_strict_pattern(p, a, validate_rule(ConstantStep{s}, p.lipschitz()));
    ASSERT_LT(c.lambda, 1.0);

    SolveOptions opts;
    opts.reference = u_star;
    std::vector<double> residual;
    opts.on_step = [&](const StepEvent& e) {
        residual.push_back((e.after - frozen_affine_step(p, u_star, e.before, s)).norm());
    };
    SolveResult r = solve(p, Vector::Zero(6), ConstantStep{s}, tight(100000, 1e-14), opts);
    const std::size_t frozen = r.trace.support_stabilization_step();
    EXPECT_LT(frozen, r.trace.size() - 10);
    for (std::size_t n = frozen; n < residual.size(); ++n) EXPECT_LE(residual[n], 1e-12) << n;
    EXPECT_LE(fit_rate(r.trace).lambda_hat, c.lambda + 1e-6);
}

TEST(FitRate, Synthetic) {
    std::vector<double> g;
    for (int n = 0; n < 40; ++n) g.push_back(std::pow(0.5, n));
    RateFit f = fit_rate(g, 0);
    EXPECT_NEAR(f.lambda_hat, 0.5, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_TRUE(f.geometric);

    std::vector<double> h;
    for (int n = 1; n <= 200; ++n) h.push_back(1.0 / n);
    RateFit s = fit_rate(h, 0);
    EXPECT_FALSE(s.geometric);

    RateFit z = fit_rate(std::vector<double>{1.0, 0.5, 0.0, 0.0}, 10);
    EXPECT_TRUE(z.exact_zero);
    EXPECT_EQ(z.lambda_hat, 0.0);

    EXPECT_THROW(fit_rate(std::vector<double>{1, 0.5, 0.25}, 0), ConfigError);
    EXPECT_THROW(fit_rate(g, 38), ConfigError);
}

TEST(FitRate, FloorStopsAtRoundoff) {
    std::vector<double> g;
    for (int n = 0; n < 60; ++n) g.push_back(std::max(std::pow(0.6, n), 1e-13));
    RateFit f = fit_rate(g, 0);
    EXPECT_NEAR(f.lambda_hat, 0.6, 1e-9);
}

TEST(Sublinear, SyntheticTraces) {
    SublinearConstants k{1.0, 0.5, 1.0, 1.0};
    EXPECT_NEAR(k.q(), std::pow(0.5 / (1 + std::sqrt(0.5)), 2), 1e-15);
    IterationTrace stalled;
    for (std::size_t n = 0; n < 50; ++n) {
        TraceRow row;
        row.n = n;
        row.gap = 1.0;
        stalled.rows.push_back(row);
    }
    SublinearReport bad = sublinear_check(stalled, k);
    EXPECT_FALSE(bad.passes());
    EXPECT_FALSE(bad.step_violations.empty());
    EXPECT_FALSE(bad.bound_violations.empty());

    IterationTrace geo;
    for (std::size_t n = 0; n < 50; ++n) {
        TraceRow row;
        row.n = n;
        row.gap = std::pow(0.3, static_cast<double>(n));
        geo.rows.push_back(row);
    }
    EXPECT_TRUE(sublinear_check(geo, k).passes());
    EXPECT_THROW(sublinear_check(IterationTrace{{TraceRow{}}, {}}, k), ConfigError);
}

TEST(Sublinear, SolverRuns) {
    oracle::Rng rng(8);
    for (int t = 0; t < 5; ++t) {
        Problem p(DenseOperator(rng.matrix(9, 7)), rng.vector(9), WeightedL1{Weights::constant(7, 0.05)});
        const Vector u_star = oracle_minimizer(p).minimizer;
        SolveOptions opts;
        opts.reference = u_star;
        const StepSizeRule rule = BoundedStep{0.4 / p.lipschitz(), 1.6 / p.lipschitz(), {}};
        SolveResult r = solve(p, Vector::Zero(7), rule, tight(10000, 1e-13), opts);
        SublinearReport rep = sublinear_check(r.trace, sublinear_constants(p, Vector::Zero(7), u_star, r.bounds));
        EXPECT_TRUE(rep.passes());
        EXPECT_LE(rep.max_n_r, rep.bound);
    }
}
