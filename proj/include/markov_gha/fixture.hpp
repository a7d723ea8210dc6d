#pragma once

#include <array>
#include <vector>

#include "markov_gha/markov_core.hpp"

// =============================================================================
// Built-in 12-state, 3-meta-state lumpable test network.
//
// The network is a complete weighted graph without self loops whose edge
// weights depend only on the meta-states of the endpoints. Meta-state 1
// (states 4, 8, 9, 11) has no internal edges. Each row therefore takes three
// distinct values, one per destination meta-state.
// =============================================================================

namespace markov_gha::fixture {

/// 0-based member states of each meta-state, in meta-state order.
inline std::vector<std::vector<markov::State>> pex_blocks() {
    return {{3, 7, 8, 10}, {0, 2, 4, 6}, {1, 5, 9, 11}};
}

/// Per-destination-state probabilities as published, indexed
/// [source meta-state][destination meta-state]. Rows of the resulting
/// transition matrix sum to 0.9997, 0.9999 and 1 respectively.
inline constexpr std::array<std::array<double, 3>, 3> kPexPrinted{{
    {0.0, 147.0 / 1000.0, 103.0 / 1000.0},
    {101.0 / 1250.0, 463.0 / 10000.0, 84.0 / 625.0},
    {17.0 / 250.0, 323.0 / 2000.0, 273.0 / 10000.0},
}};

inline constexpr std::array<std::array<double, 3>, 3> kPexMeta{{
    {0.0, 0.5880, 0.4120},
    {0.3233, 0.1389, 0.5378},
    {0.2720, 0.6461, 0.0819},
}};

/// Published stationary distribution (rounded; sums to 1.0004).
inline constexpr std::array<double, 12> kPexMu{0.105,  0.0874, 0.105,  0.0577, 0.105,  0.0874,
                                               0.105,  0.0577, 0.0577, 0.0874, 0.0577, 0.0874};

inline constexpr double kPexPhi = 0.06;

/// Published entries, zero diagonal, rows not renormalized.
inline Matrix pex_printed() {
    const auto labels = markov::block_labels(pex_blocks(), 12);
    Matrix p(12, 12);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j)
            p(i, j) = i == j ? 0.0 : kPexPrinted[labels[i]][labels[j]];
    return p;
}

struct PexFixture {
    markov::TransitionMatrix p;
    markov::StationaryDistribution mu; ///< published values, not recomputed
    Matrix meta_p;
    double phi;
    std::vector<std::vector<markov::State>> blocks;
    std::vector<int> labels;
};

/// The published matrix with each row rescaled to sum to one. Rows of one
/// meta-state share their values, so rescaling keeps the chain exactly lumpable.
inline PexFixture fixture_pex() {
    Matrix p = pex_printed();
    for (int i = 0; i < 12; ++i) p.row(i) /= p.row(i).sum();

    Matrix meta(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) meta(i, j) = kPexMeta[i][j];

    Vector mu(12);
    for (int i = 0; i < 12; ++i) mu(i) = kPexMu[i];

    auto blocks = pex_blocks();
    auto labels = markov::block_labels(blocks, 12);
    return {markov::TransitionMatrix(std::move(p)), {std::move(mu)}, std::move(meta), kPexPhi,
            std::move(blocks), std::move(labels)};
}

} // namespace markov_gha::fixture
