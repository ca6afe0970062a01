#pragma once

// Reference implementations used only by the tests. They avoid the library's
// code paths: plain loops over std::vector, bisection instead of sorting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>; // row-major

inline Vec to_vec(const Eigen::VectorXd& v) { return Vec(v.data(), v.data() + v.size()); }

inline Mat to_mat(const Eigen::MatrixXd& m) {
    Mat out(static_cast<std::size_t>(m.rows()), Vec(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline Eigen::VectorXd to_eigen(const Vec& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

inline double sgn(double x) { return (x > 0) - (x < 0); }

inline Vec matvec(const Mat& K, const Vec& u) {
    Vec y(K.size(), 0.0);
    for (std::size_t i = 0; i < K.size(); ++i)
        for (std::size_t j = 0; j < u.size(); ++j) y[i] += K[i][j] * u[j];
    return y;
}

inline Vec matTvec(const Mat& K, const Vec& y) {
    Vec u(K.empty() ? 0 : K[0].size(), 0.0);
    for (std::size_t i = 0; i < K.size(); ++i)
        for (std::size_t j = 0; j < u.size(); ++j) u[j] += K[i][j] * y[i];
    return u;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

/// One straight-line ISTA step: S_{s alpha}(u - s K^T (K u - f)).
inline Vec ista_step(const Mat& K, const Vec& f, const Vec& alpha, const Vec& u, double s) {
    Vec r = matvec(K, u);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= f[i];
    const Vec g = matTvec(K, r);
    Vec out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        const double z = u[k] - s * g[k];
        const double t = s * alpha[k];
        out[k] = std::abs(z) <= t ? 0.0 : sgn(z) * (std::abs(z) - t);
    }
    return out;
}

/// Weighted l1-ball projection by bisection on tau.
inline Vec project_ball_bisect(const Vec& u, const Vec& alpha, double radius) {
    auto mass = [&](double tau) {
        double m = 0;
        for (std::size_t k = 0; k < u.size(); ++k) m += alpha[k] * std::max(std::abs(u[k]) - tau * alpha[k], 0.0);
        return m;
    };
    if (mass(0.0) <= radius) return u;
    double lo = 0, hi = 0;
    for (std::size_t k = 0; k < u.size(); ++k) hi = std::max(hi, std::abs(u[k]) / alpha[k]);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mass(mid) > radius ? lo : hi) = mid;
    }
    const double tau = 0.5 * (lo + hi);
    Vec v(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) v[k] = sgn(u[k]) * std::max(std::abs(u[k]) - tau * alpha[k], 0.0);
    return v;
}

/// Euclidean projection onto an unweighted l1-ball of radius t.
inline Vec project_l1_bisect(const Vec& x, double t) { return project_ball_bisect(x, Vec(x.size(), 1.0), t); }

/// Central differences of a scalar function.
inline Vec finite_gradient(const std::function<double(const Vec&)>& fn, const Vec& u, double h = 1e-6) {
    Vec g(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) {
        Vec a = u, b = u;
        a[k] += h;
        b[k] -= h;
        g[k] = (fn(a) - fn(b)) / (2 * h);
    }
    return g;
}

/// Smallest singular value via the eigenvalues of the Gram matrix.
inline double min_singular_gram(const Eigen::MatrixXd& A) {
    if (A.cols() > A.rows()) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A.transpose() * A);
    return std::sqrt(std::max(0.0, eig.eigenvalues().minCoeff()));
}

inline double lambda_max_gram(const Eigen::MatrixXd& A) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A.transpose() * A);
    return eig.eigenvalues().maxCoeff();
}

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    double uniform(double a = -1, double b = 1) { return std::uniform_real_distribution<double>(a, b)(gen); }
    double normal() { return std::normal_distribution<double>(0, 1)(gen); }
    std::size_t index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
    }
    Eigen::VectorXd vector(Eigen::Index n, double scale = 1) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = scale * normal();
        return v;
    }
    Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal() / std::sqrt(static_cast<double>(r));
        return m;
    }
};

} // namespace oracle
