#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "linthresh/operators.hpp"

namespace linthresh::gen {

inline DenseOperator identity(Index n) { return DenseOperator::identity(n); }

/// diag(scale, scale * rate, scale * rate^2, ...)
inline DenseOperator diagonal_decay(Index n, double rate, double scale = 1.0) {
    if (n < 1) throw ConfigError("diagonal-decay: n must be at least 1");
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("diagonal-decay: rate must lie in (0, 1]");
    if (!(scale > 0.0)) throw ConfigError("diagonal-decay: scale must be positive");
    Vector d(static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < d.size(); ++k) d(k) = scale * std::pow(rate, static_cast<double>(k));
    return DenseOperator::diagonal(d);
}

/// Entries i.i.d. N(0, 1/rows), so columns have unit expected norm.
inline DenseOperator random_gaussian(Index rows, Index cols, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw ConfigError("random-gaussian: rows and cols must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(rows)));
    Matrix K(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < K.cols(); ++j)
        for (Eigen::Index i = 0; i < K.rows(); ++i) K(i, j) = normal(rng);
    return DenseOperator(std::move(K));
}

/// Appends `copies` duplicates of column `column` of the base operator. K is then
/// not injective on {column, duplicate}.
inline DenseOperator duplicate_column(const DenseOperator& base, Index column, Index copies = 1) {
    if (column >= base.cols()) throw ConfigError("duplicate-column: column index out of range");
    if (copies < 1) throw ConfigError("duplicate-column: copies must be >= 1");
    const Matrix& B = base.matrix();
    Matrix K(B.rows(), B.cols() + static_cast<Eigen::Index>(copies));
    K.leftCols(B.cols()) = B;
    for (Index c = 0; c < copies; ++c) K.col(B.cols() + static_cast<Eigen::Index>(c)) = B.col(static_cast<Eigen::Index>(column));
    return DenseOperator(std::move(K));
}

struct SparseSignal {
    Vector u_true;
    Vector data; ///< K u_true + noise
};

/// u_true has `nonzeros` entries of magnitude `amplitude` with random signs at
/// random positions; data = K u_true + noise * N(0, 1).
inline SparseSignal sparse_signal(const DenseOperator& K, Index nonzeros, double amplitude,
                                  double noise, std::uint64_t seed) {
    if (nonzeros > K.cols()) throw ConfigError("sparse-signal: more nonzeros than columns");
    if (!(noise >= 0.0)) throw ConfigError("sparse-signal: noise must be non-negative");
    std::mt19937_64 rng(seed);
    std::vector<Index> idx(K.cols());
    std::iota(idx.begin(), idx.end(), Index{0});
    // Fisher-Yates with explicit draws keeps the sequence independent of std::shuffle.
    for (Index i = idx.size(); i > 1; --i) {
        const Index j = static_cast<Index>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    SparseSignal out;
    out.u_true = Vector::Zero(static_cast<Eigen::Index>(K.cols()));
    for (Index k = 0; k < nonzeros; ++k) {
        out.u_true(static_cast<Eigen::Index>(idx[k])) = (rng() & 1u) ? amplitude : -amplitude;
    }
    out.data = K.apply(out.u_true);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.data.size(); ++i) out.data(i) += noise * normal(rng);
    return out;
}

} // namespace linthresh::gen
