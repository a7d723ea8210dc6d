#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "markov_gha/error.hpp"
#include "markov_gha/linalg.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/rng.hpp"

// =============================================================================
// Streaming factorization of a Markov chain from one trajectory.
//
// The iterate W ∈ ℝ^{2m×r} tracks the top-r eigenspace of the dilation
// [[0, DP], [(DP)ᵀ, 0]], whose top eigenvectors are (1/√2)[U; V] for the SVD
// DP = UΣVᵀ. Each block of τ transitions contributes one sample, the pair of
// its last two states, and one generalized Hebbian update
//
//     W ← W + η (A W − W Wᵀ A W)
//
// where A is the dilation of the one-hot matrix at that pair.
// =============================================================================

namespace markov_gha::factorizer {

using markov::State;

struct BlockSample {
    State from_state;
    State to_state;

    friend bool operator==(const BlockSample&, const BlockSample&) = default;
};

/// Fixed rate η₀, or diminishing η_k = η₀ / (1 + k/k₀).
struct LearningRate {
    enum class Kind { fixed, diminishing };

    Kind kind = Kind::fixed;
    double eta0 = 0.005;
    double k0 = 1000.0;

    static LearningRate fixed(double eta) { return {Kind::fixed, eta, 1.0}; }
    static LearningRate diminishing(double eta0, double k0) { return {Kind::diminishing, eta0, k0}; }

    double at(std::int64_t k) const {
        return kind == Kind::fixed ? eta0 : eta0 / (1.0 + static_cast<double>(k) / k0);
    }

    void validate() const {
        require(eta0 > 0.0 && std::isfinite(eta0), "learning rate must be positive");
        require(kind == Kind::fixed || k0 > 0.0, "diminishing schedule needs k0 > 0");
    }
};

struct Embedding {
    Matrix u_hat;
    Matrix v_hat;
};

struct AngleTrace {
    std::vector<std::int64_t> times;
    std::vector<double> sin2_theta;

    std::size_t size() const { return times.size(); }
};

// -----------------------------------------------------------------------------
// Down-sampling
// -----------------------------------------------------------------------------

/// Streaming down-sampler: of every τ consecutive states, the last two form a
/// sample. A trailing partial block produces nothing.
class BlockSampler {
public:
    explicit BlockSampler(int tau) : tau_(tau) { require(tau >= 2, "block length tau must be >= 2"); }

    std::optional<BlockSample> push(State s) {
        ++pos_;
        if (pos_ == tau_ - 1) previous_ = s;
        if (pos_ < tau_) return std::nullopt;
        pos_ = 0;
        return BlockSample{previous_, s};
    }

    int tau() const { return tau_; }

private:
    int tau_;
    int pos_ = 0;
    State previous_ = 0;
};

inline std::vector<BlockSample> downsample(std::span<const State> stream, int tau) {
    BlockSampler sampler(tau);
    std::vector<BlockSample> out;
    out.reserve(stream.size() / static_cast<std::size_t>(tau));
    for (State s : stream)
        if (auto sample = sampler.push(s)) out.push_back(*sample);
    return out;
}

// -----------------------------------------------------------------------------
// The update
// -----------------------------------------------------------------------------

/// Direction G = A W − W (Wᵀ A W) for the dilated one-hot sample, using the
/// rank-2 structure of A: A W = e_i W_{m+j,*} + e_{m+j} W_{i,*}. Θ(m r).
inline Matrix gha_direction(const Matrix& w, BlockSample sample) {
    const Eigen::Index m = w.rows() / 2;
    const Eigen::Index top = sample.from_state;
    const Eigen::Index bottom = m + sample.to_state;
    const Eigen::RowVectorXd wi = w.row(top);
    const Eigen::RowVectorXd wj = w.row(bottom);
    const Vector a = w * wi.transpose();
    const Vector b = w * wj.transpose();
    // W (WᵀAW) = W (wiᵀwj + wjᵀwi) = a wj + b wi
    Matrix g = -(a * wj + b * wi);
    g.row(top) += wj;
    g.row(bottom) += wi;
    return g;
}

/// One dual-free update: W + η (A W − W Wᵀ A W).
inline Matrix gha_step(const Matrix& w, BlockSample sample, double eta) {
    return w + eta * gha_direction(w, sample);
}

// -----------------------------------------------------------------------------
// State
// -----------------------------------------------------------------------------

class FactorizerState {
public:
    FactorizerState(Matrix w, LearningRate schedule, std::int64_t k = 0)
        : w_(std::move(w)), schedule_(schedule), k_(k) {
        require(w_.rows() % 2 == 0 && w_.rows() > 0 && w_.cols() > 0,
                "factorizer state must be 2m x r");
        schedule_.validate();
    }

    int m() const { return static_cast<int>(w_.rows() / 2); }
    int r() const { return static_cast<int>(w_.cols()); }
    std::int64_t k() const { return k_; }
    const Matrix& w() const { return w_; }
    const LearningRate& schedule() const { return schedule_; }

    /// Σ_k η_k² ‖G_k‖²_F accumulated since construction.
    double drift_bound() const { return drift_bound_; }

    /// ‖WᵀW − I‖_F.
    double orthonormality_drift() const {
        return (w_.transpose() * w_ - Matrix::Identity(r(), r())).norm();
    }

    void step(BlockSample sample) {
        require(sample.from_state >= 0 && sample.from_state < m() && sample.to_state >= 0 &&
                    sample.to_state < m(),
                "block sample state out of range");
        const double eta = schedule_.at(k_);
        const Matrix g = gha_direction(w_, sample);
        drift_bound_ += eta * eta * g.squaredNorm();
        w_ += eta * g;
        ++k_;
    }

    void reorthonormalize() { w_ = orthonormalize(w_); }

    /// [Û; V̂] = √2 W.
    Embedding embedding() const {
        const double s = std::sqrt(2.0);
        return {s * w_.topRows(m()), s * w_.bottomRows(m())};
    }

private:
    Matrix w_;
    LearningRate schedule_;
    std::int64_t k_ = 0;
    double drift_bound_ = 0.0;
};

/// W⁽⁰⁾: orthonormal factor of a seeded 2m×r standard Gaussian matrix.
inline FactorizerState init_state(int m, int r, std::uint64_t seed,
                                  LearningRate schedule = LearningRate{}) {
    require(m > 0 && r > 0, "init_state: m and r must be positive");
    require(r <= m, "init_state: r = " + std::to_string(r) + " exceeds m = " + std::to_string(m));
    Rng rng(seed);
    return FactorizerState(orthonormalize(gaussian_matrix(2 * m, r, rng)), schedule);
}

/// Orthonormal 2m×r basis (1/√2)[U; V] of the top-r dilation eigenspace.
inline Matrix dilation_basis(const Matrix& u, const Matrix& v) {
    require(u.rows() == v.rows() && u.cols() == v.cols(), "dilation_basis: shape mismatch");
    Matrix w(2 * u.rows(), u.cols());
    w << u, v;
    return w / std::sqrt(2.0);
}

/// ‖sinΘ(Û, U)‖² + ‖sinΘ(V̂, V)‖²; Û and V̂ need not be orthonormal.
inline double embedding_error(const Embedding& e, const Matrix& u, const Matrix& v) {
    return subspace_distance(e.u_hat, u) + subspace_distance(e.v_hat, v);
}

// -----------------------------------------------------------------------------
// Driver
// -----------------------------------------------------------------------------

struct RunParams {
    int r = 1;
    LearningRate schedule;
    int tau = 2;
    std::optional<std::int64_t> n_blocks; ///< nullopt: consume the whole stream
    std::uint64_t seed = 0;
    std::int64_t reorth_period = 0;       ///< 0 disables; 100000 when enabled by default

    void validate() const {
        require(r > 0, "r must be positive");
        require(tau >= 2, "block length tau must be >= 2");
        require(!n_blocks || *n_blocks >= 0, "n_blocks must be nonnegative");
        require(reorth_period >= 0, "reorthonormalization period must be nonnegative");
        schedule.validate();
    }
};

struct TraceOptions {
    Matrix reference;          ///< 2m×r orthonormal basis; empty disables tracing
    std::int64_t stride = 100;
    std::optional<double> stop_below;
};

/// Push-style driver: feed states one at a time.
class Factorizer {
public:
    Factorizer(int m, const RunParams& params, TraceOptions trace = {})
        : params_(params), state_(init_checked(m, params)), sampler_(params.tau),
          trace_opts_(std::move(trace)) {
        if (tracing()) {
            require(trace_opts_.reference.rows() == 2 * m && trace_opts_.reference.cols() == params.r,
                    "trace reference must be 2m x r");
            require(trace_opts_.stride > 0, "trace stride must be positive");
            record();
        }
    }

    /// Resume from a saved state.
    Factorizer(FactorizerState state, const RunParams& params, TraceOptions trace = {})
        : params_(params), state_(std::move(state)), sampler_(params.tau), trace_opts_(std::move(trace)) {
        params_.validate();
        if (tracing()) record();
    }

    /// Returns false once the block budget is exhausted or the stop rule fired.
    bool push(State s) {
        if (done()) return false;
        if (auto sample = sampler_.push(s)) apply(*sample);
        return !done();
    }

    /// Consume a pre-formed sample directly (down-sampling bypassed).
    bool push_sample(BlockSample sample) {
        if (done()) return false;
        apply(sample);
        return !done();
    }

    bool done() const {
        return stopped_ || (params_.n_blocks && applied_ >= *params_.n_blocks);
    }

    std::int64_t blocks_applied() const { return applied_; }
    const FactorizerState& state() const { return state_; }
    Embedding embedding() const { return state_.embedding(); }

    AngleTrace take_trace() {
        if (tracing() && (trace_.times.empty() || trace_.times.back() != state_.k())) record();
        return std::move(trace_);
    }

private:
    static FactorizerState init_checked(int m, const RunParams& params) {
        params.validate();
        return init_state(m, params.r, params.seed, params.schedule);
    }

    bool tracing() const { return trace_opts_.reference.size() > 0; }

    void apply(BlockSample sample) {
        state_.step(sample);
        ++applied_;
        if (params_.reorth_period > 0 && state_.k() % params_.reorth_period == 0)
            state_.reorthonormalize();
        if (tracing() && state_.k() % trace_opts_.stride == 0) record();
    }

    void record() {
        const double v = sin_theta(trace_opts_.reference, orthonormalize(state_.w())).sin2_sum;
        trace_.times.push_back(state_.k());
        trace_.sin2_theta.push_back(v);
        if (trace_opts_.stop_below && v < *trace_opts_.stop_below) stopped_ = true;
    }

    RunParams params_;
    FactorizerState state_;
    BlockSampler sampler_;
    TraceOptions trace_opts_;
    AngleTrace trace_;
    std::int64_t applied_ = 0;
    bool stopped_ = false;
};

struct RunResult {
    Embedding embedding;
    std::optional<AngleTrace> trace;
    FactorizerState state;
};

/// Down-sample `stream` and apply one update per block. With `n_blocks` set
/// the stream must hold at least n_blocks·τ states.
inline RunResult run(std::span<const State> stream, int m, const RunParams& params,
                     TraceOptions trace = {}) {
    params.validate();
    for (State s : stream)
        require(s >= 0 && s < m, "stream state " + std::to_string(s + 1) + " outside [1, m]");
    if (params.n_blocks) {
        const auto needed = static_cast<std::uint64_t>(*params.n_blocks) * params.tau;
        require(stream.size() >= needed, "stream holds " + std::to_string(stream.size()) +
                                             " states; " + std::to_string(needed) + " required");
    }
    const bool tracing = trace.reference.size() > 0;
    Factorizer f(m, params, std::move(trace));
    for (State s : stream)
        if (!f.push(s)) break;
    std::optional<AngleTrace> out_trace;
    if (tracing) out_trace = f.take_trace();
    return {f.embedding(), std::move(out_trace), f.state()};
}

// -----------------------------------------------------------------------------
// Diagnostics
// -----------------------------------------------------------------------------

struct RateFit {
    double slope;        ///< d log(sin²Θ) / dt over the decay phase
    double intercept;
    double r_squared;
    std::size_t points;
    std::int64_t decay_end; ///< time of the last point in the fitted window
};

/// Least-squares fit of log(sin²Θ) against t over the decay phase: from the
/// start until the trace first falls within 1.5× of its plateau (the mean of
/// the final 10% of points). Points at or below 1e-14 are ignored.
inline RateFit convergence_rate_fit(const AngleTrace& trace) {
    constexpr double kFloor = 1e-14;
    std::vector<double> t;
    std::vector<double> y;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace.sin2_theta[i] > kFloor) {
            t.push_back(static_cast<double>(trace.times[i]));
            y.push_back(std::log(trace.sin2_theta[i]));
        }
    }
    if (t.size() < 10)
        throw Error(ErrorKind::convergence, "trace too short: fewer than 10 points above the numerical floor");

    const std::size_t tail = std::max<std::size_t>(1, t.size() / 10);
    double plateau = 0.0;
    for (std::size_t i = t.size() - tail; i < t.size(); ++i) plateau += std::exp(y[i]);
    plateau /= static_cast<double>(tail);
    const double cutoff = std::log(1.5 * plateau);
    std::size_t end = 0;
    while (end < t.size() && y[end] > cutoff) ++end;
    // An exact exponential never flattens: its tail is still decay.
    if (end == t.size() || end < 10) {
        bool strictly_decreasing = true;
        for (std::size_t i = 1; i < y.size(); ++i) strictly_decreasing &= y[i] < y[i - 1];
        if (strictly_decreasing) end = t.size();
    }
    if (end < 10) throw Error(ErrorKind::convergence, "no decay phase detected");

    double mt = 0.0, my = 0.0;
    for (std::size_t i = 0; i < end; ++i) {
        mt += t[i];
        my += y[i];
    }
    mt /= static_cast<double>(end);
    my /= static_cast<double>(end);
    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < end; ++i) {
        stt += (t[i] - mt) * (t[i] - mt);
        sty += (t[i] - mt) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double slope = sty / stt;
    if (!(slope < 0.0)) throw Error(ErrorKind::convergence, "no decay phase detected");
    const double r2 = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
    return {slope, my - slope * mt, r2, end, static_cast<std::int64_t>(t[end - 1])};
}

/// Pointwise mean of traces sampled at identical times.
inline AngleTrace mean_trace(std::span<const AngleTrace> traces) {
    require(!traces.empty(), "mean_trace: no traces");
    AngleTrace out = traces.front();
    for (std::size_t k = 1; k < traces.size(); ++k) {
        require(traces[k].times == out.times, "mean_trace: traces sampled at different times");
        for (std::size_t i = 0; i < out.size(); ++i) out.sin2_theta[i] += traces[k].sin2_theta[i];
    }
    for (double& v : out.sin2_theta) v /= static_cast<double>(traces.size());
    return out;
}

} // namespace markov_gha::factorizer
