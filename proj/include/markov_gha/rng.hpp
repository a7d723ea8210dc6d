#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

// =============================================================================
// Philox4x32-10 counter-based generator.
//
// Every random draw in the library goes through Rng so that results are
// bit-reproducible from (seed, call sequence) alone, independent of the
// standard library's distribution implementations.
// =============================================================================

namespace markov_gha {

class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Block operator()(const Block& counter) const {
        Block x = counter;
        auto k = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t{kMul0} * x[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * x[2];
            x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        return x;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    std::array<std::uint32_t, 2> key_;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed for the `index`-th child stream of `seed`. Child 0 is `seed` itself so
/// a single-member ensemble reproduces the plain run.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return index == 0 ? seed : mix_seed(seed ^ mix_seed(index));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : philox_(seed) {}

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buffer_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint32_t below(std::uint32_t n) {
        return static_cast<std::uint32_t>((std::uint64_t{next_u32()} * n) >> 32);
    }

    /// Standard normal via Box-Muller; draws come in pairs.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    void refill() {
        buffer_ = philox_(counter_);
        for (auto& word : counter_) {
            if (++word != 0) break;
        }
        pos_ = 0;
    }

    Philox4x32 philox_;
    Philox4x32::Block counter_{};
    Philox4x32::Block buffer_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace markov_gha
