#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "linthresh/error.hpp"

namespace linthresh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;
using IndexSet = std::vector<Index>;

inline constexpr double unbounded = std::numeric_limits<double>::infinity();

namespace detail {

inline void require_length(const char* what, Eigen::Index expected, Eigen::Index actual) {
    if (expected != actual) {
        throw DimensionError(what, static_cast<std::size_t>(expected),
                             static_cast<std::size_t>(actual));
    }
}

} // namespace detail

/// Finite truncation of a bounded linear operator K : l2 -> H2.
/// Immutable after construction.
class DenseOperator {
public:
    explicit DenseOperator(Matrix entries) : entries_(std::move(entries)) {
        if (entries_.rows() < 1 || entries_.cols() < 1) {
            throw ConfigError("operator must have at least one row and one column");
        }
        if (!entries_.allFinite()) {
            throw ConfigError("operator entries must be finite");
        }
    }

    static DenseOperator identity(Index n) {
        return DenseOperator(Matrix::Identity(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n)));
    }

    static DenseOperator diagonal(const Vector& diag) {
        return DenseOperator(Matrix(diag.asDiagonal()));
    }

    Index rows() const noexcept { return static_cast<Index>(entries_.rows()); }
    Index cols() const noexcept { return static_cast<Index>(entries_.cols()); }
    const Matrix& matrix() const noexcept { return entries_; }

    /// K u
    Vector apply(const Vector& u) const {
        detail::require_length("apply: input length must equal operator cols", entries_.cols(),
                               u.size());
        return entries_ * u;
    }

    /// K^* y
    Vector adjoint_apply(const Vector& y) const {
        detail::require_length("adjoint_apply: input length must equal operator rows",
                               entries_.rows(), y.size());
        return entries_.transpose() * y;
    }

    DenseOperator adjoint() const { return DenseOperator(entries_.transpose()); }

    /// Column submatrix K|_I.
    Matrix columns(const IndexSet& support) const {
        Matrix sub(entries_.rows(), static_cast<Eigen::Index>(support.size()));
        for (std::size_t j = 0; j < support.size(); ++j) {
            if (support[j] >= cols()) {
                throw DimensionError("column index out of range", cols(), support[j] + 1);
            }
            sub.col(static_cast<Eigen::Index>(j)) =
                entries_.col(static_cast<Eigen::Index>(support[j]));
        }
        return sub;
    }

    bool operator==(const DenseOperator& other) const {
        return entries_.rows() == other.entries_.rows() &&
               entries_.cols() == other.entries_.cols() && entries_ == other.entries_;
    }

private:
    Matrix entries_;
};

/// lambda_max(K^* K) from a dense symmetric eigendecomposition. Reference path
/// for small operators.
inline double operator_norm_sq_dense(const DenseOperator& K) {
    const Matrix gram = K.matrix().transpose() * K.matrix();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    return std::max(0.0, eig.eigenvalues().maxCoeff());
}

namespace detail {

struct PowerResult {
    double estimate = 0.0;
    bool converged = false;
};

inline PowerResult power_iteration(const Matrix& K, Vector x, double tol, std::size_t max_iters) {
    PowerResult out;
    x.normalize();
    for (std::size_t it = 0; it < max_iters; ++it) {
        Vector y = K.transpose() * (K * x);
        const double theta = x.dot(y);
        const double ynorm = y.norm();
        out.estimate = theta;
        if (ynorm == 0.0) {
            out.converged = true;
            return out;
        }
        const double residual = (y - theta * x).norm();
        if (residual <= tol * theta) {
            out.converged = true;
            return out;
        }
        x = y / ynorm;
    }
    return out;
}

} // namespace detail

/// ||K||^2 = lambda_max(K^* K) by power iteration on K^* K.
///
/// Stops once the eigen-residual ||K^*K x - theta x|| drops below tol * theta. The
/// first start vector is the normalized all-ones vector; a second fixed start
/// vector covers the case where the first is orthogonal to the dominant
/// eigenvector, and the larger estimate wins.
inline double operator_norm_sq(const DenseOperator& K, double tol,
                               std::size_t max_iters = 200000) {
    if (!(tol > 0.0)) {
        throw ConfigError("operator_norm_sq: tolerance must be positive");
    }
    const auto n = static_cast<Eigen::Index>(K.cols());
    Vector ones = Vector::Ones(n);
    Vector second(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        // Low-discrepancy fill; any fixed vector works as long as it is deterministic.
        const double frac = std::fmod(0.6180339887498949 * static_cast<double>(i + 1), 1.0);
        second(i) = frac - 0.5 + ((i % 2 == 0) ? 0.25 : -0.25);
    }
    if (second.norm() == 0.0) {
        second.setOnes();
    }
    const auto a = detail::power_iteration(K.matrix(), ones, tol, max_iters);
    const auto b = detail::power_iteration(K.matrix(), second, tol, max_iters);
    const double estimate = std::max(a.estimate, b.estimate);
    if (!a.converged || !b.converged) {
        throw ConvergenceError("operator_norm_sq: power iteration did not converge within " +
                                   std::to_string(max_iters) + " iterations",
                               estimate);
    }
    return std::max(0.0, estimate);
}

/// Head/tail spectral quantities of K.
///
/// sigma[k-1] is the smallest eigenvalue of the Gram matrix of columns 1..k-1
/// (the head subspace {u : u_l = 0 for l >= k}); sigma[0] is `unbounded`.
/// mu[k-1] is the largest eigenvalue of the Gram matrix of columns k..cols.
/// Indices k are 1-based as in the usual sequence-space notation.
struct SpectralReport {
    double operator_norm_sq = 0.0;
    std::vector<double> sigma;
    std::vector<double> mu;
    double tolerance = 1e-10;

    std::size_t k_max() const noexcept { return sigma.size(); }
    double sigma_at(std::size_t k) const { return sigma.at(k - 1); }
    double mu_at(std::size_t k) const { return mu.at(k - 1); }

    /// Checks the monotonicity and ordering invariants.
    bool consistent() const {
        for (std::size_t i = 0; i + 1 < sigma.size(); ++i) {
            if (sigma[i + 1] > sigma[i] + tolerance) return false;
            if (mu[i + 1] > mu[i] + tolerance) return false;
        }
        if (mu.empty()) return true;
        const double scale = std::max(1.0, operator_norm_sq);
        for (std::size_t i = 1; i < sigma.size(); ++i) {
            if (sigma[i] > mu[0] + tolerance * scale) return false;
        }
        return mu[0] <= operator_norm_sq + tolerance * scale;
    }
};

inline SpectralReport spectral_report(const DenseOperator& K, std::size_t k_max, double tol) {
    if (k_max < 1 || k_max > K.cols()) {
        throw ConfigError("spectral_report: k_max must lie in [1, " + std::to_string(K.cols()) +
                          "], got " + std::to_string(k_max));
    }
    if (!(tol > 0.0)) {
        throw ConfigError("spectral_report: tolerance must be positive");
    }
    SpectralReport report;
    report.tolerance = tol;
    const Matrix gram = K.matrix().transpose() * K.matrix();
    const auto n = gram.rows();
    try {
        report.operator_norm_sq = operator_norm_sq(K, tol);
    } catch (const ConvergenceError&) {
        report.operator_norm_sq = operator_norm_sq_dense(K);
    }
    report.sigma.reserve(k_max);
    report.mu.reserve(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) {
        const auto head = static_cast<Eigen::Index>(k - 1);
        if (head == 0) {
            report.sigma.push_back(unbounded);
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> eig(gram.topLeftCorner(head, head),
                                                      Eigen::EigenvaluesOnly);
            report.sigma.push_back(std::max(0.0, eig.eigenvalues().minCoeff()));
        }
        const auto tail = n - head;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(gram.bottomRightCorner(tail, tail),
                                                  Eigen::EigenvaluesOnly);
        report.mu.push_back(std::max(0.0, eig.eigenvalues().maxCoeff()));
    }
    return report;
}

/// Smallest singular value of the column submatrix K|_I. Zero when |I| exceeds
/// the number of rows. The empty support reports `unbounded`.
inline double min_singular_value(const DenseOperator& K, const IndexSet& support) {
    if (support.empty()) return unbounded;
    if (support.size() > K.rows()) return 0.0;
    const Matrix sub = K.columns(support);
    Eigen::JacobiSVD<Matrix> svd(sub);
    return svd.singularValues().minCoeff();
}

/// Finite basis injectivity up to a given support size.
struct FbiReport {
    std::size_t order = 0;
    std::map<IndexSet, double> min_singular_by_support;
    bool passes = false;
    double threshold = 0.0;

    /// Smallest recorded singular value, `unbounded` if nothing was recorded.
    double min_value() const {
        double m = unbounded;
        for (const auto& [support, value] : min_singular_by_support) m = std::min(m, value);
        return m;
    }

    IndexSet worst_support() const {
        IndexSet worst;
        double m = unbounded;
        for (const auto& [support, value] : min_singular_by_support) {
            if (value < m) {
                m = value;
                worst = support;
            }
        }
        return worst;
    }

    std::optional<double> lookup(const IndexSet& support) const {
        auto it = min_singular_by_support.find(support);
        if (it == min_singular_by_support.end()) return std::nullopt;
        return it->second;
    }
};

inline constexpr std::size_t default_fbi_budget = 50000;

namespace detail {

/// Number of non-empty subsets of {0..n-1} with size <= order, saturating at cap.
inline std::size_t subset_count(std::size_t n, std::size_t order, std::size_t cap) {
    std::size_t total = 0;
    double binom = 1.0;
    for (std::size_t j = 1; j <= std::min(order, n); ++j) {
        binom = binom * static_cast<double>(n - j + 1) / static_cast<double>(j);
        if (static_cast<double>(total) + binom > static_cast<double>(cap)) return cap + 1;
        total += static_cast<std::size_t>(std::llround(binom));
    }
    return total;
}

template <class Visit>
void for_each_subset(std::size_t n, std::size_t size, Visit&& visit) {
    IndexSet idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    while (true) {
        visit(idx);
        std::size_t i = size;
        while (i > 0 && idx[i - 1] == n - size + (i - 1)) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
}

} // namespace detail

/// Checks injectivity of K restricted to finitely many coordinates.
///
/// Without explicit supports every subset of size 1..order is enumerated, so the
/// result certifies FBI of order `order` only.
inline FbiReport fbi_check(const DenseOperator& K, std::size_t order,
                           const std::optional<std::vector<IndexSet>>& supports,
                           double threshold, std::size_t budget = default_fbi_budget) {
    if (order < 1) throw ConfigError("fbi_check: order must be at least 1");
    if (!(threshold > 0.0)) throw ConfigError("fbi_check: threshold must be positive");
    FbiReport report;
    report.order = order;
    report.threshold = threshold;
    if (supports) {
        for (IndexSet s : *supports) {
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
            report.min_singular_by_support[s] = min_singular_value(K, s);
        }
    } else {
        const std::size_t count = detail::subset_count(K.cols(), order, budget);
        if (count > budget) {
            throw ConfigError("fbi_check: enumerating subsets up to order " +
                              std::to_string(order) + " of " + std::to_string(K.cols()) +
                              " columns exceeds the budget of " + std::to_string(budget) +
                              "; pass explicit supports instead");
        }
        for (std::size_t size = 1; size <= std::min(order, K.cols()); ++size) {
            detail::for_each_subset(K.cols(), size, [&](const IndexSet& s) {
                report.min_singular_by_support[s] = min_singular_value(K, s);
            });
        }
    }
    report.passes = std::all_of(report.min_singular_by_support.begin(),
                                report.min_singular_by_support.end(),
                                [&](const auto& kv) { return kv.second > threshold; });
    return report;
}

} // namespace linthresh
