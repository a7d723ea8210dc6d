#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "markov_gha/rng.hpp"

using markov_gha::Philox4x32;
using markov_gha::Rng;

// Known-answer vectors from the Random123 distribution.
TEST(Philox, KnownAnswers) {
    EXPECT_EQ(Philox4x32(0)({0, 0, 0, 0}),
              (Philox4x32::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox4x32(0xffffffffffffffffull)({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}),
              (Philox4x32::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox4x32(0x299f31d0a4093822ull)({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}),
              (Philox4x32::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Rng, DeterministicPerSeed) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        (void)c;
    }
    EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
}

TEST(Rng, UniformMoments) {
    Rng rng(7);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        sq += u * u;
    }
    EXPECT_NEAR(sum / n, 0.5, 5e-3);
    EXPECT_NEAR(sq / n - 0.25, 1.0 / 12.0, 5e-3);
}

TEST(Rng, NormalMoments) {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 1e-2);
    EXPECT_NEAR(sq / n, 1.0, 1e-2);
}

TEST(Rng, BelowStaysInRange) {
    Rng rng(3);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) {
        const auto v = rng.below(5);
        ASSERT_LT(v, 5u);
        ++counts[v];
    }
    for (int c : counts) EXPECT_NEAR(c / 50000.0, 0.2, 0.01);
}

TEST(DeriveSeed, ChildZeroIsParent) {
    EXPECT_EQ(markov_gha::derive_seed(99, 0), 99u);
    EXPECT_NE(markov_gha::derive_seed(99, 1), markov_gha::derive_seed(99, 2));
    EXPECT_NE(markov_gha::derive_seed(99, 1), 99u);
}
