#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace unident;

namespace {

Matrix low_rank_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index rank) {
  return normal_matrix(rng, rows, rank) * normal_matrix(rng, rank, cols);
}

}  // namespace

TEST(Numerics, SvdRankMatchesEliminationOnRandomLowRank) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 12);
    const Eigen::Index cols = 1 + static_cast<Eigen::Index>(rng() % 12);
    const Eigen::Index rank = static_cast<Eigen::Index>(rng() % (std::min(rows, cols) + 1));
    const Matrix M = rank == 0 ? Matrix::Zero(rows, cols) : low_rank_matrix(rng, rows, cols, rank);
    EXPECT_EQ(svd_rank(M), rank) << "trial " << trial;
    EXPECT_EQ(oracle::elimination_rank(M), rank) << "trial " << trial;
  }
}

TEST(Numerics, RankOfEmptyAndZero) {
  EXPECT_EQ(svd_rank(Matrix(0, 3)), 0);
  EXPECT_EQ(svd_rank(Matrix::Zero(4, 4)), 0);
  EXPECT_EQ(svd_rank(Matrix::Identity(5, 5)), 5);
}

TEST(Numerics, NullSpaceIsOrthonormalAndAnnihilates) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix M = low_rank_matrix(rng, 7, 9, 4);
    const Matrix N = null_space_basis(M);
    ASSERT_EQ(N.cols(), 5);
    EXPECT_LE((M * N).norm(), 1e-10 * M.norm());
    EXPECT_LE((N.transpose() * N - Matrix::Identity(5, 5)).norm(), 1e-12);
  }
}

TEST(Numerics, InSpan) {
  Rng rng(3);
  const Matrix basis = normal_matrix(rng, 6, 3);
  const Vector inside = basis * normal_matrix(rng, 3, 1);
  const Vector outside = normal_matrix(rng, 6, 1);
  EXPECT_TRUE(in_span(inside, basis));
  EXPECT_FALSE(in_span(outside, basis));
  EXPECT_TRUE(in_span(Vector::Zero(6), Matrix(6, 0)));
  EXPECT_FALSE(in_span(outside, Matrix(6, 0)));
}

TEST(Numerics, SpectralRadiusAgreesWithGelfand) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Matrix A = normal_matrix(rng, p, p);
    const double rho = spectral_radius(A);
    EXPECT_NEAR(rho, oracle::gelfand_radius(A), 1e-6 * (1.0 + rho)) << "p = " << p;
  }
}

TEST(Numerics, ScalarDareMatchesClosedForm) {
  const double P = oracle::scalar_dare(0.5, 1.0, 1.0, 1.0);
  const auto sol = solve_dare(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                              Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0));
  EXPECT_NEAR(sol.P(0, 0), P, 1e-9);
  EXPECT_NEAR(sol.P(0, 0), 1.13278, 1e-5);
  EXPECT_NEAR(sol.L(0, 0), P * 0.5 / (1.0 + P), 1e-9);
}

TEST(Numerics, ScalarDareSweepMatchesClosedForm) {
  for (double A : {-1.5, -0.9, 0.0, 0.3, 1.0, 2.0}) {
    for (double B : {0.5, 1.0, 3.0}) {
      const auto sol = solve_dare(Matrix::Constant(1, 1, A), Matrix::Constant(1, 1, B),
                                  Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 0.7));
      EXPECT_NEAR(sol.P(0, 0), oracle::scalar_dare(A, B, 2.0, 0.7),
                  1e-8 * (1.0 + sol.P(0, 0)))
          << "A=" << A << " B=" << B;
    }
  }
}

TEST(Numerics, DareResidualAndStabilityOnRandomSystems) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng() % 4);
    const Matrix A = random_state_matrix(rng, p, uniform(rng, 0.2, 1.3));
    const Matrix B = normal_matrix(rng, p, l);
    const Matrix Q = Matrix::Identity(p, p);
    const Matrix R = Matrix::Identity(l, l);
    const auto sol = solve_dare(A, B, Q, R);
    EXPECT_LE(riccati_residual(A, B, Q, R, sol.P).norm(), 1e-8 * (1.0 + sol.P.norm()));
    EXPECT_LT(spectral_radius(A - B * sol.L), 1.0);
    EXPECT_LE((sol.P - sol.P.transpose()).norm(), 1e-12 * (1.0 + sol.P.norm()));
  }
}

TEST(Numerics, DareRejectsUnstabilizablePair) {
  // Unstable mode 2.0 with no input path.
  Matrix A(2, 2);
  A << 2.0, 0.0, 0.0, 0.5;
  Matrix B(2, 1);
  B << 0.0, 1.0;
  try {
    solve_dare(A, B, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
    FAIL() << "expected NotStabilizable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotStabilizable);
  }
}

TEST(Numerics, DareRejectsBadShapesAndValues) {
  const Matrix A = Matrix::Identity(2, 2);
  EXPECT_THROW(solve_dare(A, Matrix::Ones(3, 1), Matrix::Identity(2, 2), Matrix::Identity(1, 1)),
               Error);
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 0) = std::nan("");
  try {
    solve_dare(bad, Matrix::Ones(2, 1), Matrix::Identity(2, 2), Matrix::Identity(1, 1));
    FAIL() << "expected InvalidMatrix";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidMatrix);
  }
}

TEST(Numerics, SingularGainSystemIsTyped) {
  try {
    solve_gain_system(Matrix::Zero(2, 2), Matrix::Ones(2, 2));
    FAIL() << "expected SingularGain";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularGain);
  }
}

TEST(Numerics, ToleranceValidation) {
  Tolerances tol;
  tol.rank_eps = -1.0;
  EXPECT_THROW(tol.validate(), Error);
}

TEST(Random, DeriveSeedIsStableAndSpreads) {
  static_assert(derive_seed(1, 0) != derive_seed(1, 1));
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
  EXPECT_NE(derive_seed(42, 7), derive_seed(43, 7));
}

TEST(Random, RandomInputHasRequestedRank) {
  Rng rng(6);
  for (int rank = 1; rank <= 4; ++rank) {
    const Matrix u = random_input(rng, 50, 4, rank);
    EXPECT_EQ(svd_rank(u), rank);
    EXPECT_EQ(oracle::elimination_rank(u), rank);
  }
}

TEST(Random, StateMatrixHasRequestedRadius) {
  Rng rng(7);
  for (double rho : {0.3, 0.9, 1.4}) {
    EXPECT_NEAR(spectral_radius(random_state_matrix(rng, 5, rho)), rho, 1e-10);
  }
}

TEST(Random, UnitBallPointsStayInside) {
  Rng rng(8);
  for (int i = 0; i < 200; ++i) EXPECT_LE(unit_ball_point(rng, 4).norm(), 1.0);
}
