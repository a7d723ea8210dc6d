#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/rng.hpp"

// =============================================================================
// Partition recovery: per-state representations M̂ = D̂⁻¹V̂ clustered with
// k-means, plus the exact-recovery margin test for lumpable chains.
// =============================================================================

namespace markov_gha::partition {

using markov::State;

/// Constant in the pairwise-distance stability bound |d′² − d²| ≤ 96ε/μ_min².
inline constexpr double kRecoveryConstant = 96.0;

struct EmpiricalDistribution {
    std::vector<std::int64_t> counts;
    Vector mu_hat;
};

/// Frequencies from visit counts. Every state must have been visited.
inline EmpiricalDistribution empirical_from_counts(std::vector<std::int64_t> counts) {
    const int m = static_cast<int>(counts.size());
    require(m > 0, "empirical_stationary: m must be positive");
    std::string missing;
    std::int64_t total = 0;
    for (int s = 0; s < m; ++s) {
        total += counts[s];
        if (counts[s] == 0) missing += (missing.empty() ? "" : ",") + std::to_string(s + 1);
    }
    if (!missing.empty())
        throw Error(ErrorKind::unvisited_state, "unvisited states: " + missing);
    Vector mu_hat(m);
    for (int s = 0; s < m; ++s) mu_hat(s) = static_cast<double>(counts[s]) / static_cast<double>(total);
    return {std::move(counts), std::move(mu_hat)};
}

/// Visit frequencies over the whole stream.
inline EmpiricalDistribution empirical_stationary(std::span<const State> stream, int m) {
    require(!stream.empty(), "empirical_stationary: empty stream");
    require(m > 0, "empirical_stationary: m must be positive");
    std::vector<std::int64_t> counts(m, 0);
    for (State s : stream) {
        require(s >= 0 && s < m, "empirical_stationary: state " + std::to_string(s + 1) + " outside [1, m]");
        ++counts[s];
    }
    return empirical_from_counts(std::move(counts));
}

/// M̂ = diag(μ̂)⁻¹ V̂.
inline Matrix representation(const Vector& mu_hat, const Matrix& v_hat) {
    require(mu_hat.size() == v_hat.rows(), "representation: dimension mismatch");
    for (Eigen::Index s = 0; s < mu_hat.size(); ++s)
        if (!(mu_hat(s) > 0.0))
            throw Error(ErrorKind::unvisited_state,
                        "representation: nonpositive frequency for state " + std::to_string(s + 1));
    return mu_hat.cwiseInverse().asDiagonal() * v_hat;
}

inline Matrix representation(const EmpiricalDistribution& mu_hat, const Matrix& v_hat) {
    return representation(mu_hat.mu_hat, v_hat);
}

struct Partition {
    std::vector<int> assignment;        ///< cluster index per state, in [0, r)
    Matrix centers;                     ///< r × dim
    double inertia = 0.0;
    std::vector<double> inertia_history; ///< Lloyd objective per iteration, winning restart
};

/// Nearest center by Euclidean distance; ties go to the lower center index.
inline std::vector<int> assign(const Matrix& points, const Matrix& centers) {
    require(points.cols() == centers.cols(), "assign: dimension mismatch");
    require(centers.rows() > 0, "assign: no centers");
    std::vector<int> labels(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const double d = (points.row(i) - centers.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        labels[i] = arg;
    }
    return labels;
}

inline double inertia(const Matrix& points, const Matrix& centers, const std::vector<int>& labels) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        total += (points.row(i) - centers.row(labels[i])).squaredNorm();
    return total;
}

struct KMeansOptions {
    int restarts = 10;
    int max_iter = 300;
    double tol = 1e-10;
    int max_repairs = 3;
};

namespace detail {

inline Matrix farthest_point_seeds(const Matrix& points, int r, Rng& rng) {
    const auto m = points.rows();
    Matrix centers(r, points.cols());
    centers.row(0) = points.row(rng.below(static_cast<std::uint32_t>(m)));
    Vector nearest(m);
    for (Eigen::Index i = 0; i < m; ++i) nearest(i) = (points.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < r; ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index i = 1; i < m; ++i)
            if (nearest(i) > nearest(arg)) arg = i;
        centers.row(c) = points.row(arg);
        for (Eigen::Index i = 0; i < m; ++i)
            nearest(i) = std::min(nearest(i), (points.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

inline Partition lloyd(const Matrix& points, Matrix centers, const KMeansOptions& opts) {
    const auto m = points.rows();
    const auto r = centers.rows();
    Partition part;
    part.assignment = assign(points, centers);
    part.inertia = inertia(points, centers, part.assignment);
    part.inertia_history.push_back(part.inertia);
    int repairs = 0;
    for (int it = 0; it < opts.max_iter; ++it) {
        Matrix sums = Matrix::Zero(r, points.cols());
        std::vector<int> sizes(r, 0);
        for (Eigen::Index i = 0; i < m; ++i) {
            sums.row(part.assignment[i]) += points.row(i);
            ++sizes[part.assignment[i]];
        }
        for (Eigen::Index c = 0; c < r; ++c)
            if (sizes[c] > 0) centers.row(c) = sums.row(c) / sizes[c];

        bool repaired = false;
        for (Eigen::Index c = 0; c < r; ++c) {
            if (sizes[c] > 0) continue;
            if (++repairs > opts.max_repairs)
                throw Error(ErrorKind::convergence, "kmeans: cluster stayed empty after 3 repairs");
            // Re-seed at the point farthest from its own center.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double d = (points.row(i) - centers.row(part.assignment[i])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centers.row(c) = points.row(far);
            repaired = true;
        }

        const auto labels = assign(points, centers);
        const double value = inertia(points, centers, labels);
        const double improvement = part.inertia - value;
        part.assignment = labels;
        part.inertia = value;
        part.inertia_history.push_back(value);
        if (!repaired && improvement < opts.tol) break;
    }

    std::vector<int> sizes(r, 0);
    for (int l : part.assignment) ++sizes[l];
    for (Eigen::Index c = 0; c < r; ++c)
        if (sizes[c] == 0) throw Error(ErrorKind::convergence, "kmeans: empty cluster at convergence");
    part.centers = std::move(centers);
    return part;
}

} // namespace detail

/// Best of `opts.restarts` Lloyd runs from farthest-point seeds (random first
/// center). Restart t uses derive_seed(seed, t).
inline Partition kmeans(const Matrix& points, int r, std::uint64_t seed, KMeansOptions opts = {}) {
    require(r > 0, "kmeans: r must be positive");
    require(points.rows() >= r, "kmeans: fewer points than clusters");
    require(opts.restarts > 0, "kmeans: restarts must be positive");
    Partition best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int t = 0; t < opts.restarts; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        Partition p = detail::lloyd(points, detail::farthest_point_seeds(points, r, rng), opts);
        if (p.inertia < best.inertia) best = std::move(p);
    }
    return best;
}

/// Fraction of states whose labels agree under the best relabeling. Exact
/// over all permutations for up to 8 labels; above that a greedy matching on
/// the contingency table, which can underestimate the optimum.
inline double partition_agreement(const std::vector<int>& a, const std::vector<int>& b) {
    require(a.size() == b.size(), "partition_agreement: length mismatch");
    if (a.empty()) return 1.0;
    int k = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i] >= 0 && b[i] >= 0, "partition_agreement: negative label");
        k = std::max({k, a[i] + 1, b[i] + 1});
    }
    std::vector<std::vector<int>> table(k, std::vector<int>(k, 0));
    for (std::size_t i = 0; i < a.size(); ++i) ++table[a[i]][b[i]];

    int best = 0;
    if (k <= 8) {
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            int matched = 0;
            for (int l = 0; l < k; ++l) matched += table[l][perm[l]];
            best = std::max(best, matched);
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<bool> row_used(k, false), col_used(k, false);
        for (int step = 0; step < k; ++step) {
            int br = -1, bc = -1, bv = -1;
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    if (!row_used[i] && !col_used[j] && table[i][j] > bv) {
                        bv = table[i][j];
                        br = i;
                        bc = j;
                    }
            row_used[br] = col_used[bc] = true;
            best += bv;
        }
    }
    return static_cast<double>(best) / static_cast<double>(a.size());
}

/// Squared Euclidean distances between all pairs of rows.
inline Matrix pairwise_sq_distances(const Matrix& points) {
    const auto m = points.rows();
    Matrix d(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) d(i, j) = (points.row(i) - points.row(j)).squaredNorm();
    return d;
}

/// True iff every cross-block pair of rows of `m_true` is separated by more
/// than 2·96·ε/μ_min² in squared distance.
inline bool recovery_margin_check(const Matrix& m_true, double mu_min, double eps,
                                  const std::vector<std::vector<State>>& blocks) {
    require(mu_min > 0.0, "recovery_margin_check: mu_min must be positive");
    require(eps >= 0.0, "recovery_margin_check: eps must be nonnegative");
    const auto labels = markov::block_labels(blocks, static_cast<int>(m_true.rows()));
    const double threshold = 2.0 * kRecoveryConstant * eps / (mu_min * mu_min);
    for (Eigen::Index i = 0; i < m_true.rows(); ++i)
        for (Eigen::Index j = i + 1; j < m_true.rows(); ++j)
            if (labels[i] != labels[j] && !((m_true.row(i) - m_true.row(j)).squaredNorm() > threshold))
                return false;
    return true;
}

} // namespace markov_gha::partition
