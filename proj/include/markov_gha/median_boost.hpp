#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/parallel.hpp"
#include "markov_gha/rng.hpp"
#include "markov_gha/stream_factorizer.hpp"

// =============================================================================
// Success boosting: run k independent factorizations and keep the estimate
// whose projection VVᵀ is closest to the geometric median of all k
// projections.
// =============================================================================

namespace markov_gha::boost {

struct GeometricMedian {
    Matrix median;
    std::vector<double> objective; ///< Σ_j ‖X_j − Z‖_F at each iterate
    int iterations = 0;
};

namespace detail {

inline double sum_of_distances(std::span<const Matrix> mats, const Matrix& z) {
    double total = 0.0;
    for (const auto& x : mats) total += (x - z).norm();
    return total;
}

/// Vardi-Zhang optimality test at an input point: the point is a median iff
/// the resultant of unit pulls from the other points has norm ≤ its multiplicity.
inline bool input_point_is_median(std::span<const Matrix> mats, const Matrix& y) {
    Matrix pull = Matrix::Zero(y.rows(), y.cols());
    double multiplicity = 0.0;
    for (const auto& x : mats) {
        const double d = (x - y).norm();
        if (d == 0.0) multiplicity += 1.0;
        else pull += (x - y) / d;
    }
    return multiplicity > 0.0 && pull.norm() <= multiplicity;
}

} // namespace detail

/// Weiszfeld iteration from the mean with the Vardi-Zhang step when an
/// iterate lands on an input point. Stops when the step is at most
/// tol·max(1, ‖Z‖_F). For two inputs the midpoint is returned.
inline GeometricMedian geometric_median(std::span<const Matrix> mats, double tol = 1e-9,
                                        int max_iter = 10'000) {
    require(!mats.empty(), "geometric_median: no inputs");
    for (const auto& x : mats)
        require(x.rows() == mats[0].rows() && x.cols() == mats[0].cols(),
                "geometric_median: inputs differ in shape");

    GeometricMedian out;
    // An input point that already satisfies the optimality condition is
    // returned exactly (covers identical inputs and majority points).
    if (mats.size() != 2) {
        for (const auto& x : mats) {
            if (detail::input_point_is_median(mats, x)) {
                out.median = x;
                out.objective.push_back(detail::sum_of_distances(mats, x));
                return out;
            }
        }
    }

    Matrix y = Matrix::Zero(mats[0].rows(), mats[0].cols());
    for (const auto& x : mats) y += x;
    y /= static_cast<double>(mats.size());
    out.objective.push_back(detail::sum_of_distances(mats, y));

    for (int it = 0; it < max_iter; ++it) {
        Matrix weighted = Matrix::Zero(y.rows(), y.cols());
        Matrix pull = Matrix::Zero(y.rows(), y.cols());
        double weight_sum = 0.0;
        double multiplicity = 0.0;
        for (const auto& x : mats) {
            const double d = (x - y).norm();
            if (d == 0.0) {
                multiplicity += 1.0;
                continue;
            }
            weighted += x / d;
            pull += (x - y) / d;
            weight_sum += 1.0 / d;
        }
        Matrix next;
        if (weight_sum == 0.0) {
            next = y;
        } else if (multiplicity == 0.0) {
            next = weighted / weight_sum;
        } else {
            const double pull_norm = pull.norm();
            if (pull_norm <= multiplicity) {
                out.iterations = it + 1;
                out.median = y;
                return out;
            }
            const double lambda = multiplicity / pull_norm;
            next = (1.0 - lambda) * (weighted / weight_sum) + lambda * y;
        }
        const double step = (next - y).norm();
        y = std::move(next);
        out.objective.push_back(detail::sum_of_distances(mats, y));
        if (step <= tol * std::max(1.0, y.norm())) {
            out.iterations = it + 1;
            out.median = std::move(y);
            return out;
        }
    }
    throw Error(ErrorKind::convergence, "geometric_median: no convergence after " +
                                            std::to_string(max_iter) + " iterations (objective " +
                                            std::to_string(out.objective.back()) + ")");
}

/// Column-orthonormal basis with its projection VVᵀ materialized.
struct ProjectionEstimate {
    Matrix v;
    Matrix proj;

    static ProjectionEstimate from_basis(Matrix v, double tol = 1e-8) {
        const double dev = orthonormality_deviation(v);
        if (dev > tol)
            throw Error(ErrorKind::validation,
                        "projection estimate: basis not orthonormal (deviation " + std::to_string(dev) + ")");
        Matrix proj = v * v.transpose();
        return {std::move(v), std::move(proj)};
    }
};

struct Selection {
    std::size_t index = 0;
    Matrix median;
    std::vector<double> distances; ///< ‖V_iV_iᵀ − H‖_F per estimate
};

/// Index of the estimate whose projection is Frobenius-closest to the
/// geometric median of all projections; ties go to the lowest index.
inline Selection select_estimate(std::span<const ProjectionEstimate> estimates, double tol = 1e-9) {
    require(!estimates.empty(), "select_estimate: no estimates");
    std::vector<Matrix> projs;
    projs.reserve(estimates.size());
    for (const auto& e : estimates) projs.push_back(e.proj);
    Selection out;
    out.median = geometric_median(projs, tol).median;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < projs.size(); ++i) {
        const double d = (projs[i] - out.median).norm();
        out.distances.push_back(d);
        if (d < best) {
            best = d;
            out.index = i;
        }
    }
    return out;
}

/// ⌈24 · ln(1/δ)⌉ runs for target failure probability δ.
inline int runs_for_confidence(double delta) {
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    return static_cast<int>(std::ceil(24.0 * std::log(1.0 / delta)));
}

struct BoostResult {
    factorizer::Embedding embedding;
    std::vector<factorizer::Embedding> runs;
    Selection u_selection;
    Selection v_selection;
};

/// Select among finished runs; Û and V̂ are boosted independently.
inline BoostResult boost_runs(std::vector<factorizer::Embedding> runs) {
    require(!runs.empty(), "boost: no runs");
    std::vector<ProjectionEstimate> us, vs;
    for (const auto& e : runs) {
        us.push_back(ProjectionEstimate::from_basis(orthonormalize(e.u_hat)));
        vs.push_back(ProjectionEstimate::from_basis(orthonormalize(e.v_hat)));
    }
    BoostResult out;
    out.u_selection = select_estimate(us);
    out.v_selection = select_estimate(vs);
    out.embedding = {runs[out.u_selection.index].u_hat, runs[out.v_selection.index].v_hat};
    out.runs = std::move(runs);
    return out;
}

/// k independent runs on consecutive, disjoint stream segments of ⌊n/k⌋
/// states, executed concurrently; run i is seeded with derive_seed(seed, i).
inline BoostResult boosted_factorize(std::span<const markov::State> stream, int m,
                                     const factorizer::RunParams& params, int k) {
    require(k >= 1, "boost: k must be >= 1");
    params.validate();
    const std::size_t segment = stream.size() / static_cast<std::size_t>(k);
    const std::size_t per_run =
        static_cast<std::size_t>(params.n_blocks.value_or(1)) * static_cast<std::size_t>(params.tau);
    if (segment < per_run)
        throw Error(ErrorKind::validation,
                    "boost: stream of " + std::to_string(stream.size()) + " states is too short; need " +
                        std::to_string(per_run * static_cast<std::size_t>(k)) + " (" +
                        std::to_string(k) + " segments of " + std::to_string(per_run) + ")");
    std::vector<factorizer::Embedding> runs(static_cast<std::size_t>(k));
    parallel_for(runs.size(), [&](std::size_t i) {
        factorizer::RunParams p = params;
        p.seed = derive_seed(params.seed, i);
        runs[i] = factorizer::run(stream.subspan(i * segment, segment), m, p).embedding;
    });
    return boost_runs(std::move(runs));
}

} // namespace markov_gha::boost
