#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "markov_gha/linalg.hpp"

using namespace markov_gha;

TEST(Orthonormalize, ColumnsOrthonormalAndSpanPreserved) {
    Rng rng(5);
    const Matrix a = gaussian_matrix(10, 4, rng);
    const Matrix q = orthonormalize(a);
    EXPECT_LT(orthonormality_deviation(q), 1e-12);
    // span(a) ⊆ span(q): residual of projecting a onto q vanishes.
    EXPECT_LT((a - q * (q.transpose() * a)).norm(), 1e-12);
}

TEST(Orthonormalize, SignConventionMakesItUnique) {
    Rng rng(9);
    const Matrix a = gaussian_matrix(6, 3, rng);
    const Matrix q = orthonormalize(a);
    const Matrix r = q.transpose() * a;
    for (int i = 0; i < 3; ++i) EXPECT_GT(r(i, i), 0.0);
}

TEST(SinTheta, IdenticalSubspaces) {
    const Matrix a = Matrix::Identity(5, 2);
    const auto res = sin_theta(a, a);
    EXPECT_NEAR(res.sin2_sum, 0.0, 1e-15);
    EXPECT_NEAR(res.angles.maxCoeff(), 0.0, 1e-7);
}

TEST(SinTheta, OrthogonalSubspaces) {
    Matrix a = Matrix::Zero(6, 2), b = Matrix::Zero(6, 3);
    a(0, 0) = a(1, 1) = 1.0;
    b(2, 0) = b(3, 1) = b(4, 2) = 1.0;
    const auto res = sin_theta(a, b);
    EXPECT_EQ(res.angles.size(), 2);
    EXPECT_NEAR(res.sin2_sum, 2.0, 1e-15);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(res.angles(i), std::numbers::pi / 2, 1e-12);
}

TEST(SinTheta, RotationInvariant) {
    Rng rng(1);
    const Matrix a = Matrix::Identity(7, 3);
    const Matrix rot = orthonormalize(gaussian_matrix(3, 3, rng));
    EXPECT_NEAR(sin_theta(a, a * rot).sin2_sum, 0.0, 1e-14);
}

TEST(SinTheta, RejectsNonOrthonormal) {
    Matrix a = Matrix::Identity(4, 2);
    a(0, 0) = 1.1;
    try {
        sin_theta(a, Matrix::Identity(4, 2));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::validation);
        EXPECT_NE(std::string(e.what()).find("deviation"), std::string::npos);
    }
}

// Eigenvalues of [[0,Z],[Zᵀ,0]] are ±σ_i(Z) (plus zeros for non-square Z).
TEST(Dilation, SpectrumIsPlusMinusSingularValues) {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = gaussian_matrix(4, 4, rng);
        const Vector sv = Eigen::JacobiSVD<Matrix>(z).singularValues();
        Eigen::SelfAdjointEigenSolver<Matrix> eig(dilation(z));
        const Vector ev = eig.eigenvalues(); // ascending
        for (int i = 0; i < 4; ++i) {
            EXPECT_NEAR(ev(7 - i), sv(i), 1e-10);
            EXPECT_NEAR(ev(i), -sv(i), 1e-10);
        }
    }
}
