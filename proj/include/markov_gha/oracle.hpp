#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/markov_core.hpp"

// Batch comparators for the streaming results. Everything here materializes
// m×m (or 2m×2m) matrices and is meant for small chains.

namespace markov_gha::oracle {

using markov::State;

/// Normalized transition-pair counts: entry (i,j) = #{t : s_t = i, s_{t+1} = j} / (n − 1).
inline Matrix empirical_dp(std::span<const State> stream, int m) {
    require(!stream.empty(), "empirical_dp: empty stream");
    Matrix dp = Matrix::Zero(m, m);
    if (stream.size() < 2) return dp;
    for (std::size_t t = 0; t + 1 < stream.size(); ++t) {
        require(stream[t] >= 0 && stream[t] < m && stream[t + 1] >= 0 && stream[t + 1] < m,
                "empirical_dp: state out of range");
        dp(stream[t], stream[t + 1]) += 1.0;
    }
    return dp / static_cast<double>(stream.size() - 1);
}

inline Matrix exact_dp(const markov::TransitionMatrix& p, const Vector& mu) {
    return mu.asDiagonal() * p.matrix();
}

/// DP = F₁ + F₂ with F₁ = U Σ Vᵀ the rank-r SVD truncation.
struct SpectralFactorization {
    Matrix u;
    Matrix v;
    Vector sigma;          ///< top r, nonincreasing
    Vector all_sigma;      ///< full spectrum of dp
    double gap = 0.0;      ///< σ_r − σ_{r+1} (σ_{m+1} := 0)
    bool gap_degenerate = false;

    Matrix f1() const { return u * sigma.asDiagonal() * v.transpose(); }
};

inline SpectralFactorization batch_factorize(const Matrix& dp, int r) {
    require(dp.rows() == dp.cols() && dp.rows() > 0, "batch_factorize: dp must be square");
    require(r > 0 && r <= dp.rows(), "batch_factorize: need 0 < r <= m");
    Eigen::JacobiSVD<Matrix> svd(dp, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector s = svd.singularValues();
    if (s(0) == 0.0)
        throw Error(ErrorKind::degenerate, "batch_factorize: all singular values are zero");

    SpectralFactorization out;
    out.u = svd.matrixU().leftCols(r);
    out.v = svd.matrixV().leftCols(r);
    out.sigma = s.head(r);
    out.all_sigma = s;
    const double next = r < dp.rows() ? s(r) : 0.0;
    out.gap = s(r - 1) - next;
    out.gap_degenerate = out.gap <= 1e-12;
    return out;
}

struct KktResidual {
    double primal;      ///< ‖EA·W − W·(WᵀEA·W)‖_F
    double feasibility; ///< ‖WᵀW − I‖_F
};

inline KktResidual kkt_residual(const Matrix& w, const Matrix& ea) {
    require(ea.rows() == ea.cols() && ea.rows() == w.rows(), "kkt_residual: dimension mismatch");
    const Matrix aw = ea * w;
    return {(aw - w * (w.transpose() * aw)).norm(),
            (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm()};
}

/// tr(Wᵀ EA W).
inline double objective(const Matrix& w, const Matrix& ea) {
    require(ea.rows() == ea.cols() && ea.rows() == w.rows(), "objective: dimension mismatch");
    return (w.transpose() * ea * w).trace();
}

/// max over block pairs and same-block state pairs of the difference of
/// row sums into a destination block.
inline double lumpability_residual(const markov::TransitionMatrix& p,
                                   const std::vector<std::vector<State>>& blocks) {
    markov::block_labels(blocks, p.size());
    double worst = 0.0;
    for (const auto& source : blocks) {
        if (source.size() < 2) continue;
        for (const auto& dest : blocks) {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (State k : source) {
                double sum = 0.0;
                for (State l : dest) sum += p(k, l);
                lo = std::min(lo, sum);
                hi = std::max(hi, sum);
            }
            worst = std::max(worst, hi - lo);
        }
    }
    return worst;
}

/// Top-r orthonormal eigenvectors of a symmetric matrix (largest eigenvalues first).
inline Matrix top_eigenvectors(const Matrix& symmetric, int r) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric);
    const auto n = symmetric.rows();
    Matrix out(n, r);
    for (int c = 0; c < r; ++c) out.col(c) = eig.eigenvectors().col(n - 1 - c);
    return out;
}

inline Matrix bottom_eigenvectors(const Matrix& symmetric, int r) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric);
    return eig.eigenvectors().leftCols(r);
}

} // namespace markov_gha::oracle
