// Recover the three meta-states of the 12-state fixture from one simulated walk.
//
//   pex_recovery [eta] [updates] [seed]
//
// Defaults: eta 0.02, 10000 updates, seed 1, block length 2.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "markov_gha/markov_gha.hpp"

using namespace markov_gha;

int main(int argc, char** argv) {
    const double eta = argc > 1 ? std::atof(argv[1]) : 0.02;
    const long updates = argc > 2 ? std::atol(argv[2]) : 10000;
    const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 1;

    try {
        const auto fx = fixture::fixture_pex();
        const auto mu = markov::stationary_distribution(fx.p);
        const auto ref = oracle::batch_factorize(oracle::exact_dp(fx.p, mu.mu), 3);

        experiments::RecoveryParams params;
        params.schedule = factorizer::LearningRate::fixed(eta);
        params.samples = updates;
        const auto trial = experiments::recovery_trial(fx.p, mu.mu, fx.labels, params, seed, &ref.u, &ref.v);

        std::printf("eta %.4g, %ld updates, seed %llu\n", eta, updates, static_cast<unsigned long long>(seed));
        std::printf("sin^2 error against the batch SVD: %.4f\n", trial.embedding_error);
        std::printf("state  found  true\n");
        for (int s = 0; s < 12; ++s)
            std::printf("%5d  %5d  %4d\n", s + 1, trial.labels[s] + 1, fx.labels[s] + 1);
        std::printf("partition agreement: %.3f\n", trial.agreement);
        return trial.agreement == 1.0 ? 0 : 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
        return 2;
    }
}
