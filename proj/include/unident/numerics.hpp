#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "unident/error.hpp"

namespace unident {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Tolerances {
  double rank_eps = 1e-9;
  double residual_eps = 1e-7;
  double dare_eps = 1e-10;
  int dare_max_iter = 10'000;

  void validate() const {
    if (!(rank_eps > 0) || !(residual_eps > 0) || !(dare_eps > 0) ||
        dare_max_iter < 1) {
      throw Error(ErrorCode::ShapeError,
                  "tolerances must be strictly positive and dare_max_iter >= 1");
    }
  }
};

struct RiccatiSolution {
  Matrix P;  // stabilizing solution, symmetric PSD
  Matrix L;  // gain, u = -L x
  int iterations = 0;
};

inline std::string shape_of(const Eigen::Ref<const Matrix>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_finite(const Eigen::Ref<const Matrix>& m,
                           const char* what = "matrix") {
  if (!m.allFinite()) {
    throw Error(ErrorCode::InvalidMatrix,
                std::string(what) + " has non-finite entries");
  }
}

inline void require_square(const Eigen::Ref<const Matrix>& m,
                           const char* what = "matrix") {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::ShapeError,
                std::string(what) + " must be square, got " + shape_of(m));
  }
}

namespace detail {

inline Eigen::JacobiSVD<Matrix> thin_svd(const Eigen::Ref<const Matrix>& m,
                                         int options) {
  return Eigen::JacobiSVD<Matrix>(m, options);
}

// Count of singular values above rank_eps * sigma_max * max(dims).
inline int count_above(const Vector& sigma, Eigen::Index rows,
                       Eigen::Index cols, const Tolerances& tol) {
  if (sigma.size() == 0) return 0;
  const double smax = sigma(0);
  if (!(smax > 0)) return 0;
  const double cut =
      tol.rank_eps * smax * static_cast<double>(std::max(rows, cols));
  int r = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cut) ++r;
  }
  return r;
}

}  // namespace detail

/// Numerical rank: singular values strictly above
/// rank_eps * sigma_max * max(rows, cols). The zero matrix has rank 0.
inline int svd_rank(const Eigen::Ref<const Matrix>& m,
                    const Tolerances& tol = {}) {
  require_finite(m);
  if (m.size() == 0) return 0;
  const auto svd = detail::thin_svd(m, 0);
  return detail::count_above(svd.singularValues(), m.rows(), m.cols(), tol);
}

/// Orthonormal basis of the right null space of m, one vector per column.
/// The column count is cols(m) - svd_rank(m).
inline Matrix null_space_basis(const Eigen::Ref<const Matrix>& m,
                               const Tolerances& tol = {}) {
  require_finite(m);
  const Eigen::Index n = m.cols();
  if (m.rows() == 0) return Matrix::Identity(n, n);
  const auto svd = detail::thin_svd(m, Eigen::ComputeFullV);
  const int r = detail::count_above(svd.singularValues(), m.rows(), n, tol);
  return svd.matrixV().rightCols(n - r);
}

/// True when target lies in the column span of others, decided by whether
/// appending it leaves the numerical rank unchanged.
inline bool in_span(const Eigen::Ref<const Vector>& target,
                    const Eigen::Ref<const Matrix>& others,
                    const Tolerances& tol = {}) {
  if (others.cols() > 0 && others.rows() != target.size()) {
    throw Error(ErrorCode::ShapeError,
                "target has " + std::to_string(target.size()) +
                    " rows, others is " + shape_of(others));
  }
  Matrix joined(target.size(), others.cols() + 1);
  joined.leftCols(others.cols()) = others;
  joined.col(others.cols()) = target;
  return svd_rank(joined, tol) == svd_rank(others, tol);
}

inline double spectral_radius(const Eigen::Ref<const Matrix>& m) {
  require_square(m);
  require_finite(m);
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidMatrix, "eigenvalue iteration failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves S * X = rhs for the symmetric PSD S = R + B'PB arising in every
/// Riccati gain. Near-singular S raises SingularGain.
inline Matrix solve_gain_system(const Matrix& S, const Matrix& rhs) {
  const auto svd = detail::thin_svd(S, 0);
  const Vector& sigma = svd.singularValues();
  if (sigma.size() == 0 || !(sigma(0) > 0) ||
      sigma(sigma.size() - 1) <= 1e-13 * sigma(0)) {
    throw Error(ErrorCode::SingularGain,
                "R + B'PB is singular (" + shape_of(S) + ")");
  }
  return S.ldlt().solve(rhs);
}

/// A'PA - A'PB (R + B'PB)^-1 B'PA - P + Qx
inline Matrix riccati_residual(const Matrix& A, const Matrix& B,
                               const Matrix& Qx, const Matrix& R,
                               const Matrix& P) {
  const Matrix S = R + B.transpose() * P * B;
  const Matrix BtPA = B.transpose() * P * A;
  return A.transpose() * P * A -
         BtPA.transpose() * S.ldlt().solve(BtPA) - P + Qx;
}

/// Stabilizing solution of the discrete algebraic Riccati equation by
/// fixed-point (value) iteration started at P0 = Qx.
inline RiccatiSolution solve_dare(const Matrix& A, const Matrix& B,
                                  const Matrix& Qx, const Matrix& R,
                                  const Tolerances& tol = {}) {
  tol.validate();
  require_square(A, "A");
  require_square(Qx, "Qx");
  require_square(R, "R");
  const Eigen::Index p = A.rows();
  const Eigen::Index l = B.cols();
  if (B.rows() != p || Qx.rows() != p || R.rows() != l) {
    throw Error(ErrorCode::ShapeError,
                "DARE dimensions disagree: A " + shape_of(A) + ", B " +
                    shape_of(B) + ", Qx " + shape_of(Qx) + ", R " +
                    shape_of(R));
  }
  require_finite(A, "A");
  require_finite(B, "B");
  require_finite(Qx, "Qx");
  require_finite(R, "R");

  const Matrix At = A.transpose();
  Matrix P = 0.5 * (Qx + Qx.transpose());
  for (int it = 1; it <= tol.dare_max_iter; ++it) {
    const Matrix BtP = B.transpose() * P;
    const Matrix G = solve_gain_system(R + BtP * B, BtP * A);
    Matrix next = Qx + At * P * A - At * BtP.transpose() * G;
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) break;
    const double step = (next - P).stableNorm();
    const double scale = 1.0 + P.stableNorm();
    P = std::move(next);
    if (!std::isfinite(scale)) break;
    if (step <= tol.dare_eps * scale) {
      const Matrix BtPf = B.transpose() * P;
      Matrix L = solve_gain_system(R + BtPf * B, BtPf * A);
      if (!(spectral_radius(A - B * L) < 1.0)) break;
      return {P, std::move(L), it};
    }
  }
  throw Error(ErrorCode::NotStabilizable,
              "Riccati iteration found no stabilizing solution within " +
                  std::to_string(tol.dare_max_iter) + " iterations");
}

}  // namespace unident
