#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "markov_gha/fixture.hpp"
#include "markov_gha/markov_core.hpp"
#include "markov_gha/oracle.hpp"

using namespace markov_gha;
using namespace markov_gha::markov;

namespace {

TransitionMatrix half_half() { return TransitionMatrix(Matrix::Constant(2, 2, 0.5)); }

TransitionMatrix cycle3() {
    Matrix p = Matrix::Zero(3, 3);
    p(0, 1) = p(1, 2) = p(2, 0) = 1.0;
    return TransitionMatrix(p);
}

TransitionMatrix permuted(const TransitionMatrix& p, const std::vector<int>& perm) {
    const int m = p.size();
    Matrix q(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) q(perm[i], perm[j]) = p(i, j);
    return TransitionMatrix(q);
}

TransitionMatrix random_chain(int m, Rng& rng) {
    Matrix p(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) p(i, j) = rng.uniform(0.05, 1.0);
        p.row(i) /= p.row(i).sum();
    }
    return TransitionMatrix(p);
}

template <class F>
ErrorKind error_kind(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::io;
}

} // namespace

TEST(TransitionMatrix, RejectsBadRows) {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    p(0, 0) = 0.6;
    EXPECT_EQ(error_kind([&] { TransitionMatrix{p}; }), ErrorKind::validation);
    p(0, 0) = -0.5;
    p(0, 1) = 1.5;
    EXPECT_EQ(error_kind([&] { TransitionMatrix{p}; }), ErrorKind::validation);
}

TEST(Stationary, SymmetricTwoState) {
    const auto mu = stationary_distribution(half_half());
    EXPECT_NEAR(mu.mu(0), 0.5, 1e-12);
    EXPECT_NEAR(mu.mu(1), 0.5, 1e-12);
}

TEST(Stationary, PeriodicCycleIsUniform) {
    const auto mu = stationary_distribution(cycle3());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(mu.mu(i), 1.0 / 3.0, 1e-12);
}

TEST(Stationary, FixtureMatchesPublishedValues) {
    const auto fx = fixture::fixture_pex();
    const auto mu = stationary_distribution(fx.p);
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(mu.mu(i), fixture::kPexMu[i], 5e-4) << "state " << i + 1;
    EXPECT_LE(stationary_residual(fx.p, mu.mu), 1e-10);
    EXPECT_NEAR(mu.mu.sum(), 1.0, 1e-12);
}

TEST(Stationary, ResidualOnRandomChains) {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = random_chain(2 + trial % 9, rng);
        const auto mu = stationary_distribution(p);
        EXPECT_LE(stationary_residual(p, mu.mu), 1e-10);
        EXPECT_GT(mu.min(), 0.0);
    }
}

TEST(Stationary, ReducibleChainNamesState) {
    Matrix p = Matrix::Identity(3, 3);
    p(0, 0) = 0.5;
    p(0, 1) = 0.5;
    try {
        stationary_distribution(TransitionMatrix(p));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::not_irreducible);
        EXPECT_NE(std::string(e.what()).find("state 2"), std::string::npos) << e.what();
    }
}

TEST(DetailedBalance, Examples) {
    const auto p = half_half();
    EXPECT_EQ(detailed_balance_residual(p, stationary_distribution(p)), 0.0);

    // p12 = 0.9, p21 = 0.1 with exact μ = (0.1, 0.9)
    Matrix pp(2, 2);
    pp << 0.1, 0.9, 0.1, 0.9;
    StationaryDistribution mu{Vector(2)};
    mu.mu << 0.1, 0.9;
    EXPECT_NEAR(detailed_balance_residual(TransitionMatrix(pp), mu), 0.0, 1e-17);
}

TEST(DetailedBalance, FixtureIsNearlyReversible) {
    const auto fx = fixture::fixture_pex();
    EXPECT_LE(detailed_balance_residual(fx.p, fx.mu), 1e-3);
    // Rounded published entries leave a small asymmetry even against the exact μ.
    EXPECT_LE(detailed_balance_residual(fx.p, stationary_distribution(fx.p)), 1e-5);
}

// Direct evaluation of the ratio over Ω = {1} and Ω = {2}: each cut couples
// Σ_i 0.5·0.5·0.5·0.5/0.5 = 0.25 against mass 0.5.
TEST(MergingConductance, SymmetricTwoState) {
    const auto p = half_half();
    EXPECT_NEAR(merging_conductance(p, stationary_distribution(p)), 0.5, 1e-15);
}

TEST(MergingConductance, SingleStateHasNoFeasibleSet) {
    const TransitionMatrix p(Matrix::Ones(1, 1));
    EXPECT_EQ(error_kind([&] { merging_conductance(p, stationary_distribution(p)); }),
              ErrorKind::degenerate);
}

TEST(MergingConductance, SizeLimit) {
    const TransitionMatrix p(Matrix::Constant(25, 25, 1.0 / 25));
    StationaryDistribution mu{Vector::Constant(25, 1.0 / 25)};
    try {
        merging_conductance(p, mu);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::size_limit);
        EXPECT_NE(std::string(e.what()).find("phi"), std::string::npos);
    }
}

// Brute-force evaluation of the ratio, subset by subset, as an oracle for the
// incremental Gray-code search.
TEST(MergingConductance, MatchesBruteForceAndIsPermutationInvariant) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 3 + trial % 6;
        const auto p = random_chain(m, rng);
        const auto mu = stationary_distribution(p);
        double best = 1e300;
        for (unsigned mask = 1; mask < (1u << m); ++mask) {
            double mass = 0.0, cut = 0.0;
            for (int j = 0; j < m; ++j)
                if (mask >> j & 1u) mass += mu.mu(j);
            if (mass > 0.5 + 1e-12) continue;
            for (int j = 0; j < m; ++j) {
                if (!(mask >> j & 1u)) continue;
                for (int l = 0; l < m; ++l) {
                    if (mask >> l & 1u) continue;
                    for (int i = 0; i < m; ++i)
                        cut += mu.mu(j) * p(j, i) * mu.mu(l) * p(l, i) / mu.mu(i);
                }
            }
            best = std::min(best, cut / mass);
        }
        const double phi = merging_conductance(p, mu);
        EXPECT_NEAR(phi, best, 1e-12);
        EXPECT_GT(phi, 0.0);
        EXPECT_LE(phi, 1.0);

        std::vector<int> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        for (int s = m - 1; s > 0; --s) std::swap(perm[s], perm[rng.below(s + 1)]);
        const auto q = permuted(p, perm);
        EXPECT_NEAR(merging_conductance(q, stationary_distribution(q)), phi, 1e-12);
    }
}

TEST(BlockLength, Examples) {
    EXPECT_EQ(block_length(0.06, 0.105, 0.0577, 0.01), 2725);
    EXPECT_EQ(block_length(1.0, 0.3, 0.3, std::exp(-1.0)), 2);
    EXPECT_EQ(block_length(1.0, 0.3, 0.3, 0.999), 2);
}

TEST(BlockLength, RejectsInvalidInputs) {
    EXPECT_EQ(error_kind([] { block_length(0.0, 0.1, 0.1, 0.1); }), ErrorKind::validation);
    EXPECT_EQ(error_kind([] { block_length(0.5, 0.1, 0.1, 0.0); }), ErrorKind::validation);
    EXPECT_EQ(error_kind([] { block_length(0.5, 0.1, 0.1, 1.0); }), ErrorKind::validation);
    EXPECT_EQ(error_kind([] { block_length(0.5, 0.1, 0.0, 0.1); }), ErrorKind::validation);
    EXPECT_EQ(error_kind([] { block_length(0.5, 0.1, 0.2, 0.1); }), ErrorKind::validation);
}

TEST(Simulate, DeterministicCycle) {
    EXPECT_EQ(simulate_walk(cycle3(), 0, 4, 1), (Trajectory{1, 2, 0, 1}));
    EXPECT_TRUE(simulate_walk(cycle3(), 0, 0, 1).empty());
}

TEST(Simulate, SameSeedSameTrajectory) {
    const auto fx = fixture::fixture_pex();
    EXPECT_EQ(simulate_walk(fx.p, 0, 5000, 77), simulate_walk(fx.p, 0, 5000, 77));
    EXPECT_NE(simulate_walk(fx.p, 0, 5000, 77), simulate_walk(fx.p, 0, 5000, 78));
}

TEST(Simulate, FrequenciesApproachStationaryLaw) {
    const auto fx = fixture::fixture_pex();
    const auto mu = stationary_distribution(fx.p);
    const auto walk = simulate_walk(fx.p, 0, 100000, 5);
    std::vector<int> counts(12, 0);
    for (State s : walk) ++counts[s];
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(counts[i] / 1e5, mu.mu(i), 0.01);
}

TEST(Simulate, TransitionFrequenciesMatchRows) {
    Matrix p(3, 3);
    p << 0.2, 0.3, 0.5, 0.6, 0.0, 0.4, 0.1, 0.1, 0.8;
    const TransitionMatrix tp(p);
    const auto walk = simulate_walk(tp, 0, 300000, 13);
    Matrix counts = Matrix::Zero(3, 3);
    State prev = 0;
    for (State s : walk) {
        counts(prev, s) += 1.0;
        prev = s;
    }
    for (int i = 0; i < 3; ++i) {
        counts.row(i) /= counts.row(i).sum();
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(counts(i, j), p(i, j), 0.01);
    }
    EXPECT_EQ(counts(1, 1), 0.0);
}

TEST(Lumpable, SingletonBlocksReproduceMetaMatrix) {
    LumpableSpec spec;
    spec.meta_p = Matrix(3, 3);
    spec.meta_p << 0.2, 0.3, 0.5, 0.6, 0.0, 0.4, 0.1, 0.1, 0.8;
    spec.blocks = {{0}, {1}, {2}};
    EXPECT_EQ(make_lumpable_chain(spec, 3).matrix(), spec.meta_p);
}

TEST(Lumpable, SingleBlock) {
    LumpableSpec spec{{{0, 1, 2, 3}}, Matrix::Ones(1, 1)};
    const auto p = make_lumpable_chain(spec, 4);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(p.matrix().row(i).sum(), 1.0, 1e-12);
    EXPECT_LE(oracle::lumpability_residual(p, spec.blocks), 1e-12);
}

TEST(Lumpable, MetaRowSumsHoldForEveryStatePair) {
    const auto fx = fixture::fixture_pex();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = make_lumpable_chain({fx.blocks, fx.meta_p}, seed);
        for (std::size_t i = 0; i < 3; ++i)
            for (State k : fx.blocks[i])
                for (std::size_t j = 0; j < 3; ++j) {
                    double sum = 0.0;
                    for (State l : fx.blocks[j]) sum += p(k, l);
                    EXPECT_NEAR(sum, fx.meta_p(i, j), 1e-12);
                }
        EXPECT_LE(oracle::lumpability_residual(p, fx.blocks), 1e-12);
    }
}

// Within-block spread of the rows of D⁻¹V for the top-3 right singular
// vectors of DP.
TEST(Lumpable, RepresentationIsPiecewiseConstant) {
    const auto fx = fixture::fixture_pex();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = make_lumpable_chain({fx.blocks, fx.meta_p}, seed);
        const auto mu = stationary_distribution(p);
        const auto f = oracle::batch_factorize(oracle::exact_dp(p, mu.mu), 3);
        const Matrix rep = mu.mu.cwiseInverse().asDiagonal() * f.v;
        for (const auto& block : fx.blocks)
            for (State s : block) EXPECT_LE((rep.row(s) - rep.row(block[0])).norm(), 1e-8);
    }
}

TEST(Lumpable, InfeasibleSpecs) {
    LumpableSpec empty_target{{{0, 1}, {}}, Matrix(2, 2)};
    empty_target.meta_p << 0.5, 0.5, 0.5, 0.5;
    EXPECT_EQ(error_kind([&] { make_lumpable_chain(empty_target, 1); }), ErrorKind::validation);

    LumpableSpec bad_rows{{{0}, {1}}, Matrix(2, 2)};
    bad_rows.meta_p << 0.5, 0.6, 0.5, 0.5;
    EXPECT_EQ(error_kind([&] { make_lumpable_chain(bad_rows, 1); }), ErrorKind::validation);

    LumpableSpec overlap{{{0, 1}, {1}}, Matrix::Constant(2, 2, 0.5)};
    EXPECT_EQ(error_kind([&] { make_lumpable_chain(overlap, 1); }), ErrorKind::validation);
}
