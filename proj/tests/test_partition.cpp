#include <gtest/gtest.h>

#include <numeric>

#include "markov_gha/fixture.hpp"
#include "markov_gha/oracle.hpp"
#include "markov_gha/partition.hpp"

using namespace markov_gha;
using namespace markov_gha::partition;

TEST(EmpiricalStationary, Counting) {
    const markov::Trajectory s{0, 0, 1};
    const auto e = empirical_stationary(s, 2);
    EXPECT_EQ(e.counts, (std::vector<std::int64_t>{2, 1}));
    EXPECT_DOUBLE_EQ(e.mu_hat(0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(e.mu_hat(1), 1.0 / 3.0);
}

TEST(EmpiricalStationary, UnvisitedStateIsNamed) {
    const markov::Trajectory s{0, 1, 0};
    try {
        empirical_stationary(s, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::unvisited_state);
        EXPECT_EQ(std::string(e.what()), "unvisited states: 3");
    }
}

TEST(EmpiricalStationary, FixtureSampleSize) {
    const auto fx = fixture::fixture_pex();
    const auto e = empirical_stationary(markov::simulate_walk(fx.p, 0, 10000, 1), 12);
    for (int i = 0; i < 12; ++i) EXPECT_NEAR(e.mu_hat(i), fixture::kPexMu[i], 0.01);
    EXPECT_NEAR(e.mu_hat.sum(), 1.0, 1e-12);
}

TEST(Representation, Examples) {
    Rng rng(1);
    const Matrix v = gaussian_matrix(5, 2, rng);
    EXPECT_LE((representation(Vector::Constant(5, 0.2), v) - 5.0 * v).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(representation(Vector::Constant(5, 0.2), Matrix::Zero(5, 2)), Matrix::Zero(5, 2));
    Vector bad = Vector::Constant(5, 0.2);
    bad(3) = 0.0;
    EXPECT_THROW(representation(bad, v), Error);
}

TEST(Representation, ExactLumpableRowsConstantPerBlock) {
    const auto fx = fixture::fixture_pex();
    const auto p = markov::make_lumpable_chain({fx.blocks, fx.meta_p}, 42);
    const auto mu = markov::stationary_distribution(p);
    const auto f = oracle::batch_factorize(oracle::exact_dp(p, mu.mu), 3);
    const Matrix rep = representation(mu.mu, f.v);
    for (const auto& block : fx.blocks)
        for (auto s : block) EXPECT_LE((rep.row(s) - rep.row(block[0])).norm(), 1e-6);
}

TEST(Assign, TiesAndScaling) {
    Matrix centers(2, 1);
    centers << -1.0, 1.0;
    Matrix points(3, 1);
    points << 0.0, 1.0, -1.0;
    EXPECT_EQ(assign(points, centers), (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(assign(7.5 * points, 7.5 * centers), assign(points, centers));
    Matrix same = Matrix::Constant(4, 1, 1.0);
    EXPECT_EQ(assign(same, centers), (std::vector<int>(4, 1)));
}

TEST(KMeans, IdenticalPointGroups) {
    Matrix pts(9, 2);
    for (int i = 0; i < 9; ++i) pts.row(i) << (i % 3) * 10.0, (i % 3) * -4.0;
    const auto part = kmeans(pts, 3, 5);
    EXPECT_EQ(part.inertia, 0.0);
    std::vector<int> truth(9);
    for (int i = 0; i < 9; ++i) truth[i] = i % 3;
    EXPECT_EQ(partition_agreement(part.assignment, truth), 1.0);
}

TEST(KMeans, SingleClusterIsMean) {
    Rng rng(2);
    const Matrix pts = gaussian_matrix(10, 3, rng);
    const auto part = kmeans(pts, 1, 1);
    EXPECT_LE((part.centers.row(0) - pts.colwise().mean()).norm(), 1e-14);
}

TEST(KMeans, OneClusterPerPoint) {
    Rng rng(3);
    const Matrix pts = gaussian_matrix(6, 2, rng);
    const auto part = kmeans(pts, 6, 1);
    EXPECT_EQ(part.inertia, 0.0);
    std::vector<int> sorted = part.assignment;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(KMeans, ObjectiveNonIncreasingAndDeterministic) {
    Rng rng(4);
    const Matrix pts = gaussian_matrix(60, 2, rng);
    const auto a = kmeans(pts, 4, 9);
    for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
        EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1] + 1e-12);
    EXPECT_NEAR(a.inertia, inertia(pts, a.centers, a.assignment), 1e-12);
    const auto b = kmeans(pts, 4, 9);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, RowPermutationInvariance) {
    Rng rng(5);
    Matrix pts(30, 2);
    for (int i = 0; i < 30; ++i) pts.row(i) << (i % 3) * 5.0 + 0.3 * rng.normal(), 0.3 * rng.normal();
    std::vector<int> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    for (int s = 29; s > 0; --s) std::swap(perm[s], perm[rng.below(s + 1)]);
    Matrix shuffled(30, 2);
    for (int i = 0; i < 30; ++i) shuffled.row(perm[i]) = pts.row(i);
    const auto a = kmeans(pts, 3, 1);
    const auto b = kmeans(shuffled, 3, 1);
    EXPECT_NEAR(a.inertia, b.inertia, 1e-10);
    std::vector<int> back(30);
    for (int i = 0; i < 30; ++i) back[i] = b.assignment[perm[i]];
    EXPECT_EQ(partition_agreement(a.assignment, back), 1.0);
}

TEST(Agreement, Examples) {
    EXPECT_EQ(partition_agreement({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
    EXPECT_EQ(partition_agreement({0, 0, 1, 1, 2}, {2, 2, 0, 0, 1}), 1.0);
    EXPECT_EQ(partition_agreement({0, 0, 1, 1}, {1, 0, 0, 0}), 0.75);
    EXPECT_THROW(partition_agreement({0}, {0, 1}), Error);
}

TEST(MarginCheck, Examples) {
    Matrix same(4, 2);
    same << 1, 1, 1, 1, 1, 1, 1, 1;
    EXPECT_FALSE(recovery_margin_check(same, 0.1, 1e-6, {{0, 1}, {2, 3}}));
    Matrix distinct(4, 2);
    distinct << 0, 0, 0, 0, 1, 0, 1, 0;
    EXPECT_TRUE(recovery_margin_check(distinct, 0.1, 0.0, {{0, 1}, {2, 3}}));
    // Threshold 2·96·ε/μ_min² = 0.96 for ε = 5e-5, μ_min = 0.1.
    EXPECT_TRUE(recovery_margin_check(distinct, 0.1, 4.9e-5, {{0, 1}, {2, 3}}));
    EXPECT_FALSE(recovery_margin_check(distinct, 0.1, 5.3e-5, {{0, 1}, {2, 3}}));
}

// With exact μ and exact top-3 V the margin is met for small ε and k-means
// recovers the generating blocks.
TEST(EndToEnd, ExactRepresentationRecoversBlocks) {
    const auto fx = fixture::fixture_pex();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = markov::make_lumpable_chain({fx.blocks, fx.meta_p}, seed);
        const auto mu = markov::stationary_distribution(p);
        const auto f = oracle::batch_factorize(oracle::exact_dp(p, mu.mu), 3);
        const Matrix rep = representation(mu.mu, f.v);
        ASSERT_TRUE(recovery_margin_check(rep, mu.min(), 1e-6, fx.blocks));
        const auto part = kmeans(rep, 3, seed);
        EXPECT_EQ(partition_agreement(part.assignment, fx.labels), 1.0);
    }
}
