#pragma once

// Planted subspace perturbations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>

#include "markov_gha/linalg.hpp"

namespace planted {

using markov_gha::Matrix;
using markov_gha::Rng;
using markov_gha::Vector;

/// Orthonormal basis of the complement of span(v).
inline Matrix complement(const Matrix& v) {
    const Matrix full = Eigen::HouseholderQR<Matrix>(v).householderQ();
    return full.rightCols(v.rows() - v.cols());
}

/// Basis whose principal angles to span(v) have Σ sin² = `sin2`, spread
/// randomly over min(r, n − r) angles, then rotated by a random r×r
/// orthogonal matrix.
inline Matrix tilt(const Matrix& v, double sin2, Rng& rng) {
    const auto r = v.cols();
    const Matrix perp = complement(v);
    const auto q = std::min(r, perp.cols());
    const Matrix dir = markov_gha::orthonormalize(perp * markov_gha::gaussian_matrix(perp.cols(), q, rng));
    Vector share(q);
    for (Eigen::Index i = 0; i < q; ++i) share(i) = rng.uniform() + 1e-3;
    share *= sin2 / share.sum();
    Matrix out = v;
    for (Eigen::Index i = 0; i < q; ++i) {
        const double s = std::sqrt(std::min(1.0, share(i)));
        out.col(i) = std::sqrt(1.0 - s * s) * v.col(i) + s * dir.col(i);
    }
    const Matrix rot = markov_gha::orthonormalize(markov_gha::gaussian_matrix(r, r, rng));
    return out * rot;
}

} // namespace planted
