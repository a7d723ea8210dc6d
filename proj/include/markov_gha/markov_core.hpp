#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/rng.hpp"

// =============================================================================
// Finite-state Markov chains: validation, stationary law, conductance,
// block length, simulation, and lumpable chain generation.
//
// States are 0-based in the API. File formats (see io.hpp) are 1-based.
// =============================================================================

namespace markov_gha::markov {

using State = int;
using Trajectory = std::vector<State>;

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kStationaryResidualTolerance = 1e-10;

/// Row-stochastic m×m matrix. Construction validates entries and row sums.
class TransitionMatrix {
public:
    TransitionMatrix() = default;

    explicit TransitionMatrix(Matrix p) : p_(std::move(p)) {
        require(p_.rows() > 0 && p_.rows() == p_.cols(),
                "transition matrix must be square and nonempty");
        for (Eigen::Index i = 0; i < p_.rows(); ++i) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < p_.cols(); ++j) {
                const double v = p_(i, j);
                require(std::isfinite(v) && v >= 0.0 && v <= 1.0,
                        "transition matrix entry (" + std::to_string(i + 1) + "," +
                            std::to_string(j + 1) + ") outside [0,1]");
                sum += v;
            }
            require(std::abs(sum - 1.0) <= kRowSumTolerance,
                    "transition matrix row " + std::to_string(i + 1) + " sums to " +
                        std::to_string(sum));
        }
    }

    int size() const { return static_cast<int>(p_.rows()); }
    double operator()(int i, int j) const { return p_(i, j); }
    const Matrix& matrix() const { return p_; }

private:
    Matrix p_;
};

/// Stationary law μ of a chain: positive entries summing to one.
struct StationaryDistribution {
    Vector mu;

    int size() const { return static_cast<int>(mu.size()); }
    double max() const { return mu.maxCoeff(); }
    double min() const { return mu.minCoeff(); }
    Matrix diag() const { return mu.asDiagonal(); }
};

struct ChainStats {
    double phi = 1.0;
    double mu_max = 1.0;
    double mu_min = 1.0;
    int tau = 2;
};

/// r meta-states: `blocks[i]` lists the member states of meta-state i and
/// `meta_p` is the r×r transition matrix between meta-states.
struct LumpableSpec {
    std::vector<std::vector<State>> blocks;
    Matrix meta_p;

    int state_count() const {
        int m = 0;
        for (const auto& b : blocks) m += static_cast<int>(b.size());
        return m;
    }
};

// -----------------------------------------------------------------------------
// Reachability
// -----------------------------------------------------------------------------

namespace detail {

inline std::vector<bool> reachable(const Matrix& p, int start, bool reverse) {
    const int m = static_cast<int>(p.rows());
    std::vector<bool> seen(m, false);
    std::vector<int> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        const int s = stack.back();
        stack.pop_back();
        for (int t = 0; t < m; ++t) {
            const double w = reverse ? p(t, s) : p(s, t);
            if (w > 0.0 && !seen[t]) {
                seen[t] = true;
                stack.push_back(t);
            }
        }
    }
    return seen;
}

} // namespace detail

/// First state that is not mutually reachable with state 0, if any.
inline std::optional<State> find_unreachable_state(const TransitionMatrix& p) {
    const auto fwd = detail::reachable(p.matrix(), 0, false);
    const auto bwd = detail::reachable(p.matrix(), 0, true);
    for (int s = 0; s < p.size(); ++s)
        if (!fwd[s] || !bwd[s]) return s;
    return std::nullopt;
}

inline void require_irreducible(const TransitionMatrix& p) {
    if (auto s = find_unreachable_state(p))
        throw Error(ErrorKind::not_irreducible,
                    "chain is not irreducible: state " + std::to_string(*s + 1) +
                        " does not communicate with state 1");
}

// -----------------------------------------------------------------------------
// Stationary distribution
// -----------------------------------------------------------------------------

/// ‖μᵀP − μᵀ‖∞.
inline double stationary_residual(const TransitionMatrix& p, const Vector& mu) {
    return (p.matrix().transpose() * mu - mu).cwiseAbs().maxCoeff();
}

/// Power iteration on the lazy chain (I + P)/2, which shares μ with P and is
/// aperiodic, so periodic chains converge too.
inline StationaryDistribution stationary_distribution(const TransitionMatrix& p,
                                                      double tol = 1e-13,
                                                      long max_iter = 1'000'000) {
    require_irreducible(p);
    const int m = p.size();
    const Matrix pt = p.matrix().transpose();
    Vector x = Vector::Constant(m, 1.0 / m);
    bool converged = false;
    for (long it = 0; it < max_iter; ++it) {
        Vector next = 0.5 * (x + pt * x);
        next /= next.sum();
        const double change = (next - x).lpNorm<1>();
        x = std::move(next);
        if (change < tol) {
            converged = true;
            break;
        }
    }
    const double residual = stationary_residual(p, x);
    if (!converged || residual > kStationaryResidualTolerance)
        throw Error(ErrorKind::convergence,
                    "stationary power iteration did not converge (residual " +
                        std::to_string(residual) + ")");
    return {x};
}

/// max_{i≠j} |μ_i p_ij − μ_j p_ji|; zero exactly for reversible chains.
inline double detailed_balance_residual(const TransitionMatrix& p,
                                        const StationaryDistribution& mu) {
    require(mu.size() == p.size(), "detailed_balance_residual: dimension mismatch");
    double worst = 0.0;
    for (int i = 0; i < p.size(); ++i)
        for (int j = i + 1; j < p.size(); ++j)
            worst = std::max(worst, std::abs(mu.mu(i) * p(i, j) - mu.mu(j) * p(j, i)));
    return worst;
}

// -----------------------------------------------------------------------------
// Merging conductance and block length
// -----------------------------------------------------------------------------

inline constexpr int kMaxConductanceStates = 24;

/// Φ = min over nonempty Ω with μ(Ω) ≤ 1/2 of
///     Σ_{j∈Ω, l∉Ω} Σ_i μ_j p_ji μ_l p_li / μ_i  /  μ(Ω).
/// Exhaustive over subsets (Gray-code order), so limited to m ≤ 24.
inline double merging_conductance(const TransitionMatrix& p, const StationaryDistribution& mu) {
    const int m = p.size();
    require(mu.size() == m, "merging_conductance: dimension mismatch");
    if (m > kMaxConductanceStates)
        throw Error(ErrorKind::size_limit,
                    "merging_conductance: m = " + std::to_string(m) +
                        " exceeds the exhaustive limit of 24 states; supply phi explicitly");

    // coupling(j, l) = Σ_i μ_j p_ji μ_l p_li / μ_i
    const Matrix flow = mu.mu.asDiagonal() * p.matrix();
    const Matrix coupling = flow * mu.mu.cwiseInverse().asDiagonal() * flow.transpose();

    constexpr double kHalf = 0.5 + 1e-12;
    std::vector<bool> in(m, false);
    double numerator = 0.0;
    double mass = 0.0;
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_mask = 0;
    std::uint32_t gray = 0;
    const std::uint64_t total = std::uint64_t{1} << m;
    for (std::uint64_t step = 1; step < total; ++step) {
        const int x = std::countr_zero(step);
        // Toggling x changes the cut by the ordered pairs (x, l∉Ω) and (j∈Ω, x).
        double to_out = 0.0;
        double from_in = 0.0;
        for (int l = 0; l < m; ++l) {
            if (l == x) continue;
            if (in[l]) from_in += coupling(l, x);
            else to_out += coupling(x, l);
        }
        if (!in[x]) {
            numerator += to_out - from_in;
            mass += mu.mu(x);
        } else {
            numerator -= to_out - from_in;
            mass -= mu.mu(x);
        }
        in[x] = !in[x];
        gray ^= std::uint32_t{1} << x;
        if (mass <= kHalf && mass > 0.0) {
            const double ratio = numerator / mass;
            if (ratio < best) {
                best = ratio;
                best_mask = gray;
            }
        }
    }
    if (!std::isfinite(best))
        throw Error(ErrorKind::degenerate,
                    "merging_conductance: no nonempty state set has stationary mass <= 1/2");

    // Re-evaluate the minimizer directly to shed accumulated rounding.
    double num = 0.0;
    double den = 0.0;
    for (int j = 0; j < m; ++j) {
        if (!(best_mask >> j & 1u)) continue;
        den += mu.mu(j);
        for (int l = 0; l < m; ++l)
            if (!(best_mask >> l & 1u)) num += coupling(j, l);
    }
    return num / den;
}

/// τ = ⌈(2/Φ²) · log(√(μ_max/μ_min) / η)⌉, floored at 2.
inline int block_length(double phi, double mu_max, double mu_min, double eta) {
    require(phi > 0.0 && phi <= 1.0, "block_length: phi must lie in (0, 1]");
    require(eta > 0.0 && eta < 1.0, "block_length: eta must lie in (0, 1)");
    require(mu_min > 0.0 && mu_max >= mu_min, "block_length: need mu_max >= mu_min > 0");
    const double log_term = 0.5 * std::log(mu_max / mu_min) - std::log(eta);
    const double tau = std::ceil(2.0 / (phi * phi) * log_term);
    require(tau < 1e9, "block_length: block length overflows");
    return std::max(2, static_cast<int>(tau));
}

inline ChainStats chain_stats(const TransitionMatrix& p, const StationaryDistribution& mu,
                              double eta) {
    ChainStats stats;
    stats.phi = merging_conductance(p, mu);
    stats.mu_max = mu.max();
    stats.mu_min = mu.min();
    stats.tau = block_length(stats.phi, stats.mu_max, stats.mu_min, eta);
    return stats;
}

// -----------------------------------------------------------------------------
// Simulation
// -----------------------------------------------------------------------------

/// Streaming random walk. Each call to next() advances one transition.
class WalkSimulator {
public:
    WalkSimulator(const TransitionMatrix& p, State start, std::uint64_t seed)
        : m_(p.size()), cumulative_(static_cast<std::size_t>(m_) * m_), last_(m_), rng_(seed),
          state_(start) {
        require(start >= 0 && start < m_, "simulate: start state out of range");
        for (int i = 0; i < m_; ++i) {
            double acc = 0.0;
            for (int j = 0; j < m_; ++j) {
                acc += p(i, j);
                cumulative_[static_cast<std::size_t>(i) * m_ + j] = acc;
                if (p(i, j) > 0.0) last_[i] = j;
            }
        }
    }

    State state() const { return state_; }

    State next() {
        const double u = rng_.uniform();
        const double* row = cumulative_.data() + static_cast<std::size_t>(state_) * m_;
        int j = 0;
        while (j < last_[state_] && row[j] <= u) ++j;
        state_ = j;
        return state_;
    }

private:
    int m_;
    std::vector<double> cumulative_;
    std::vector<int> last_;
    Rng rng_;
    State state_;
};

/// n states following `start` (the start state itself is not included).
inline Trajectory simulate_walk(const TransitionMatrix& p, State start, std::size_t n,
                                std::uint64_t seed) {
    WalkSimulator walk(p, start, seed);
    Trajectory out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) out.push_back(walk.next());
    return out;
}

/// Draw a state from `mu` (inverse-CDF on one uniform).
inline State sample_state(const Vector& mu, Rng& rng) {
    const double u = rng.uniform() * mu.sum();
    double acc = 0.0;
    for (Eigen::Index s = 0; s < mu.size(); ++s) {
        acc += mu(s);
        if (u < acc) return static_cast<State>(s);
    }
    return static_cast<State>(mu.size() - 1);
}

// -----------------------------------------------------------------------------
// Lumpable chains
// -----------------------------------------------------------------------------

/// Block label of every state; validates that `blocks` partitions [0, m).
inline std::vector<int> block_labels(const std::vector<std::vector<State>>& blocks, int m) {
    std::vector<int> label(m, -1);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (State s : blocks[b]) {
            require(s >= 0 && s < m, "blocks: state index out of range");
            require(label[s] == -1, "blocks: state " + std::to_string(s + 1) + " listed twice");
            label[s] = static_cast<int>(b);
        }
    }
    for (int s = 0; s < m; ++s)
        require(label[s] != -1, "blocks: state " + std::to_string(s + 1) + " not covered");
    return label;
}

/// Inverse of block_labels.
inline std::vector<std::vector<State>> blocks_from_labels(const std::vector<int>& labels) {
    int r = 0;
    for (int l : labels) r = std::max(r, l + 1);
    std::vector<std::vector<State>> blocks(r);
    for (std::size_t s = 0; s < labels.size(); ++s) blocks[labels[s]].push_back(static_cast<State>(s));
    return blocks;
}

/// Exactly lumpable chain with meta-level transitions `spec.meta_p`.
///
/// Every state l gets a weight a_l ~ U(0.5, 1.5); the probability of moving
/// from a state in block i to state l in block j is meta_p(i,j)·a_l / A_j,
/// where A_j sums the weights of block j. Sharing the column weight across
/// source rows keeps D⁻¹V piecewise constant on the blocks.
inline TransitionMatrix make_lumpable_chain(const LumpableSpec& spec, std::uint64_t seed) {
    const int r = static_cast<int>(spec.blocks.size());
    require(r > 0, "lumpable spec: no blocks");
    require(spec.meta_p.rows() == r && spec.meta_p.cols() == r,
            "lumpable spec: meta_p must be r x r");
    const int m = spec.state_count();
    require(m > 0, "lumpable spec: no states");
    const auto label = block_labels(spec.blocks, m);
    for (int i = 0; i < r; ++i) {
        double sum = 0.0;
        for (int j = 0; j < r; ++j) {
            const double v = spec.meta_p(i, j);
            require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "lumpable spec: meta_p entry outside [0,1]");
            sum += v;
            if (!spec.blocks[i].empty() && spec.blocks[j].empty() && v > 0.0)
                throw Error(ErrorKind::validation,
                            "lumpable spec: meta_p sends mass into empty block " + std::to_string(j + 1));
        }
        require(std::abs(sum - 1.0) <= kRowSumTolerance,
                "lumpable spec: meta_p row " + std::to_string(i + 1) + " does not sum to 1");
    }

    Rng rng(seed);
    Vector weight(m);
    for (int s = 0; s < m; ++s) weight(s) = rng.uniform(0.5, 1.5);
    Vector block_weight = Vector::Zero(r);
    for (int s = 0; s < m; ++s) block_weight(label[s]) += weight(s);

    Matrix p(m, m);
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
            p(k, l) = spec.meta_p(label[k], label[l]) * (weight(l) / block_weight(label[l]));
    return TransitionMatrix(std::move(p));
}

} // namespace markov_gha::markov
