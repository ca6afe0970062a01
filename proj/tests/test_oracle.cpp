#include <gtest/gtest.h>

#include "linthresh/generators.hpp"
#include "linthresh/oracle.hpp"
#include "linthresh/solver.hpp"
#include "support/oracles.hpp"

using namespace linthresh;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v(i++) = x;
    return v;
}

} // namespace

TEST(Oracle, ClosedForms) {
    Problem one(DenseOperator::identity(1), vec({2}), WeightedL1{Weights::constant(1, 0.5)});
    OracleResult r = oracle_minimizer(one);
    EXPECT_NEAR(r.minimizer(0), 1.5, 1e-15);
    EXPECT_EQ(r.patterns, 3u);

    Problem id(DenseOperator::identity(3), vec({1, 0.4, -2}), WeightedL1{Weights::constant(3, 0.5)});
    const Vector u = oracle_minimizer(id).minimizer;
    EXPECT_NEAR(u(0), 0.5, 1e-15);
    EXPECT_EQ(u(1), 0.0);
    EXPECT_NEAR(u(2), -1.5, 1e-15);
}

TEST(Oracle, CorrelatedColumnsAgreeWithLongRun) {
    Matrix K(2, 2);
    K << 1.0, 0.9, 0.0, 0.3;
    Problem p(DenseOperator(K), vec({1.0, 0.2}), WeightedL1{Weights::constant(2, 0.05)});
    StoppingRule stop;
    stop.max_iters = 1000000;
    stop.step_tol = 1e-14;
    SolveResult r = solve(p, Vector::Zero(2), ConstantStep{1.0 / p.lipschitz()}, stop);
    EXPECT_LE((r.state.iterate - oracle_minimizer(p).minimizer).norm(), 1e-8);
}

TEST(Oracle, MinimizesObjectiveAgainstPerturbations) {
    oracle::Rng rng(1);
    for (int t = 0; t < 10; ++t) {
        Problem p(DenseOperator(rng.matrix(7, 5)), rng.vector(7),
                  WeightedL1{Weights(Vector::Constant(5, 0.05) + 0.1 * rng.vector(5).cwiseAbs())});
        OracleResult r = oracle_minimizer(p);
        EXPECT_EQ(r.patterns, 243u);
        for (int k = 0; k < 50; ++k) {
            const Vector v = r.minimizer + 1e-3 * rng.vector(5);
            EXPECT_GE(objective(p, v), r.objective - 1e-14);
        }
    }
}

TEST(Oracle, SingularSupportsSkipped) {
    DenseOperator K = gen::duplicate_column(gen::random_gaussian(6, 3, 2), 0);
    Problem p(K, K.apply(vec({1, 0, 0, 0})), WeightedL1{Weights::constant(4, 0.01)});
    OracleResult r = oracle_minimizer(p);
    EXPECT_GT(r.singular_skipped, 0u);
    EXPECT_GE(r.feasible, 1u);
}

TEST(Oracle, Errors) {
    Problem big(DenseOperator::identity(13), Vector::Ones(13), WeightedL1{Weights::constant(13, 0.1)});
    EXPECT_THROW(oracle_minimizer(big), ConfigError);
    Problem joint(DenseOperator::identity(2), Vector::Ones(2),
                  JointPenalty{Weights::constant(1, 0.1), BlockNorm{QNorm::two, 2}});
    EXPECT_THROW(oracle_minimizer(joint), ConfigError);
}
