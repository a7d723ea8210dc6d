#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "markov_gha/markov_core.hpp"
#include "markov_gha/parallel.hpp"
#include "markov_gha/partition.hpp"
#include "markov_gha/stream_factorizer.hpp"

// =============================================================================
// Seeded multi-trial experiments shared by the CLI and the acceptance suite.
// Trials stream the walk straight into the factorizer, so no trajectory is
// materialized even for long block lengths.
// =============================================================================

namespace markov_gha::experiments {

using markov_gha::parallel_for;

/// Start state drawn from μ so the stream is stationary from its first state.
inline markov::State stationary_start(const Vector& mu, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    return markov::sample_state(mu, rng);
}

// -----------------------------------------------------------------------------
// Partition recovery
// -----------------------------------------------------------------------------

struct RecoveryParams {
    int r = 3;
    factorizer::LearningRate schedule = factorizer::LearningRate::fixed(0.005);
    int tau = 2;
    std::int64_t samples = 10'000; ///< block samples, i.e. updates
    int restarts = 10;
};

struct RecoveryTrial {
    double agreement = 0.0;
    double embedding_error = 0.0; ///< against the supplied reference, if any
    std::vector<int> labels;
};

/// simulate → factorize → empirical μ̂ → k-means for one seed. The stream holds
/// samples·τ states; μ̂ counts all of them.
inline RecoveryTrial recovery_trial(const markov::TransitionMatrix& p, const Vector& mu,
                                    const std::vector<int>& truth, const RecoveryParams& params,
                                    std::uint64_t seed, const Matrix* u_ref = nullptr,
                                    const Matrix* v_ref = nullptr) {
    const int m = p.size();
    factorizer::RunParams run;
    run.r = params.r;
    run.schedule = params.schedule;
    run.tau = params.tau;
    run.n_blocks = params.samples;
    run.seed = seed;
    factorizer::Factorizer f(m, run);
    markov::WalkSimulator walk(p, stationary_start(mu, seed), derive_seed(seed, 2));
    std::vector<std::int64_t> counts(m, 0);
    while (!f.done()) {
        const auto s = walk.next();
        ++counts[s];
        f.push(s);
    }
    const auto mu_hat = partition::empirical_from_counts(std::move(counts));

    const auto emb = f.embedding();
    RecoveryTrial out;
    const auto part = partition::kmeans(partition::representation(mu_hat, emb.v_hat), params.r,
                                        derive_seed(seed, 3), {params.restarts});
    out.labels = part.assignment;
    out.agreement = partition::partition_agreement(part.assignment, truth);
    if (u_ref && v_ref) out.embedding_error = factorizer::embedding_error(emb, *u_ref, *v_ref);
    return out;
}

// -----------------------------------------------------------------------------
// Convergence ensembles
// -----------------------------------------------------------------------------

struct EnsembleParams {
    int r = 3;
    factorizer::LearningRate schedule = factorizer::LearningRate::fixed(0.005);
    int tau = 2;
    std::int64_t n_blocks = 10'000;
    std::int64_t stride = 100;
    int trials = 100;
};

/// Pointwise mean of sin²Θ(reference, W) traces over independent trials;
/// trial t uses derive_seed(seed, t) for both its walk and its W⁽⁰⁾.
inline factorizer::AngleTrace ensemble_mean_trace(const markov::TransitionMatrix& p, const Vector& mu,
                                                  const Matrix& reference, const EnsembleParams& params,
                                                  std::uint64_t seed, unsigned threads = 0) {
    require(params.trials > 0, "ensemble: trials must be positive");
    std::vector<factorizer::AngleTrace> traces(static_cast<std::size_t>(params.trials));
    parallel_for(
        traces.size(),
        [&](std::size_t t) {
            const auto trial_seed = derive_seed(seed, t);
            factorizer::RunParams run;
            run.r = params.r;
            run.schedule = params.schedule;
            run.tau = params.tau;
            run.n_blocks = params.n_blocks;
            run.seed = trial_seed;
            factorizer::Factorizer f(p.size(), run, {reference, params.stride, std::nullopt});
            markov::WalkSimulator walk(p, stationary_start(mu, trial_seed), derive_seed(trial_seed, 2));
            while (!f.done()) f.push(walk.next());
            traces[t] = f.take_trace();
        },
        threads);
    return factorizer::mean_trace(traces);
}

/// Mean of the trailing `tail_fraction` of a trace.
inline double plateau_level(const factorizer::AngleTrace& trace, double tail_fraction = 0.25) {
    require(trace.size() > 0, "plateau: empty trace");
    const auto n = trace.size();
    const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(tail_fraction * static_cast<double>(n)));
    double sum = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) sum += trace.sin2_theta[i];
    return sum / static_cast<double>(tail);
}

} // namespace markov_gha::experiments
