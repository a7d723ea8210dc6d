#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "markov_gha/error.hpp"
#include "markov_gha/rng.hpp"

namespace markov_gha {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix with i.i.d. N(0,1) entries, filled column-major from `rng`.
inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix g(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) g(r, c) = rng.normal();
    return g;
}

/// Thin orthonormal factor of a full-column-rank matrix, with the sign of each
/// column fixed so that the triangular factor has a nonnegative diagonal.
inline Matrix orthonormalize(const Matrix& a) {
    require(a.cols() <= a.rows(), "orthonormalize: more columns than rows");
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix& packed = qr.matrixQR();
    for (Eigen::Index c = 0; c < a.cols(); ++c)
        if (packed(c, c) < 0.0) q.col(c) = -q.col(c);
    return q;
}

/// ‖AᵀA − I‖_max.
inline double orthonormality_deviation(const Matrix& a) {
    const Matrix gram = a.transpose() * a;
    return (gram - Matrix::Identity(a.cols(), a.cols())).cwiseAbs().maxCoeff();
}

/// Self-adjoint dilation [[0, Z], [Zᵀ, 0]].
inline Matrix dilation(const Matrix& z) {
    const auto rows = z.rows();
    const auto cols = z.cols();
    Matrix d = Matrix::Zero(rows + cols, rows + cols);
    d.topRightCorner(rows, cols) = z;
    d.bottomLeftCorner(cols, rows) = z.transpose();
    return d;
}

struct PrincipalAngles {
    Vector angles;   ///< nondecreasing, radians in [0, π/2]
    double sin2_sum; ///< ‖sin Θ‖²_F
};

/// Principal angles between the column spaces of two column-orthonormal
/// matrices. The narrower input determines the number of angles.
inline PrincipalAngles sin_theta(const Matrix& a, const Matrix& b, double tol = 1e-8) {
    require(a.rows() == b.rows(), "sin_theta: row counts differ");
    const double dev_a = orthonormality_deviation(a);
    const double dev_b = orthonormality_deviation(b);
    if (dev_a > tol || dev_b > tol)
        throw Error(ErrorKind::validation,
                    "sin_theta: input columns are not orthonormal (deviation " +
                        std::to_string(std::max(dev_a, dev_b)) + ")");
    const Matrix& narrow = a.cols() <= b.cols() ? a : b;
    const Matrix& wide = a.cols() <= b.cols() ? b : a;
    const Matrix cross = narrow.transpose() * wide;
    Eigen::JacobiSVD<Matrix> svd(cross);
    const Vector sv = svd.singularValues();

    PrincipalAngles out{Vector(narrow.cols()), 0.0};
    for (Eigen::Index i = 0; i < narrow.cols(); ++i) {
        const double c = i < sv.size() ? std::clamp(sv(i), 0.0, 1.0) : 0.0;
        out.angles(i) = std::acos(c);
        out.sin2_sum += 1.0 - c * c;
    }
    return out;
}

/// ‖sin Θ‖²_F between the column spaces of two full-rank (not necessarily
/// orthonormal) matrices.
inline double subspace_distance(const Matrix& a, const Matrix& b) {
    return sin_theta(orthonormalize(a), orthonormalize(b)).sin2_sum;
}

} // namespace markov_gha
