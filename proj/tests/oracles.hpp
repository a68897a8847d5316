#pragma once

// Reference computations used only by the tests. Each one is written without
// the library routine it checks: elimination instead of SVD, repeated
// squaring instead of an eigen-solver, explicit loops instead of recursions.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "unident/unident.hpp"

namespace oracle {

using unident::Matrix;
using unident::Vector;

/// Rank by Gaussian elimination with complete pivoting. A pivot counts when it
/// exceeds rel * (largest entry of the original matrix).
inline int elimination_rank(Matrix M, double rel = 1e-9) {
  if (M.size() == 0) return 0;
  const double scale = M.cwiseAbs().maxCoeff();
  if (!(scale > 0)) return 0;
  int rank = 0;
  const Eigen::Index rows = M.rows(), cols = M.cols();
  for (Eigen::Index k = 0; k < std::min(rows, cols); ++k) {
    Eigen::Index pr = 0, pc = 0;
    const double piv = M.bottomRightCorner(rows - k, cols - k).cwiseAbs().maxCoeff(&pr, &pc);
    if (piv <= rel * scale * std::max(rows, cols)) break;
    M.row(k).swap(M.row(k + pr));
    M.col(k).swap(M.col(k + pc));
    for (Eigen::Index i = k + 1; i < rows; ++i) {
      M.row(i).tail(cols - k) -= (M(i, k) / M(k, k)) * M.row(k).tail(cols - k);
    }
    ++rank;
  }
  return rank;
}

/// Spectral radius from Gelfand's formula, ||A^(2^k)||^(2^-k), with the
/// growth kept in a running logarithm.
inline double gelfand_radius(const Matrix& A, int squarings = 40) {
  Matrix M = A;
  double log_scale = 0.0;  // log of the factor divided out of M
  double est = 0.0;
  double power = 1.0;
  for (int k = 0; k < squarings; ++k) {
    const double nrm = M.norm();
    if (nrm == 0.0) return 0.0;
    log_scale += std::log(nrm);
    M /= nrm;
    est = std::exp(log_scale / power);
    M = M * M;
    log_scale *= 2.0;
    power *= 2.0;
  }
  return est;
}

/// Outputs of x(t+1) = A x + B u, y = C x by direct iteration.
inline Matrix naive_outputs(const Matrix& A, const Matrix& B, const Matrix& C,
                            const Matrix& u, const Vector& x0) {
  Vector x = x0;
  Matrix y(u.rows(), C.rows());
  for (Eigen::Index t = 0; t < u.rows(); ++t) {
    y.row(t) = (C * x).transpose();
    x = A * x + B * u.row(t).transpose();
  }
  return y;
}

/// Markov parameter C A^k B by explicit k-fold multiplication.
inline Matrix naive_markov(const Matrix& A, const Matrix& B, const Matrix& C, int k) {
  Matrix M = B;
  for (int s = 0; s < k; ++s) M = A * M;
  return C * M;
}

/// Positive root of the scalar DARE P = Q + A^2 P - A^2 B^2 P^2 / (R + B^2 P).
inline double scalar_dare(double A, double B, double Q, double R) {
  const double b = R * (1.0 - A * A) - Q * B * B;
  return (-b + std::sqrt(b * b + 4.0 * B * B * Q * R)) / (2.0 * B * B);
}

/// Infinite-horizon closed-loop cost matrix: P = sum_k Acl'^k Qcl Acl^k with
/// Qcl = C'QC + G'RG, by solving the Kronecker-form Lyapunov equation.
inline Matrix closed_loop_cost_matrix(const Matrix& A, const Matrix& B, const Matrix& C,
                                      const Matrix& Q, const Matrix& R, const Matrix& G) {
  const Eigen::Index p = A.rows();
  const Matrix Acl = A - B * G;
  const Matrix Qcl = C.transpose() * Q * C + G.transpose() * R * G;
  Matrix K = Matrix::Identity(p * p, p * p);
  // vec(Acl' P Acl) = (Acl' kron Acl') vec(P) in column-major vec.
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index k = 0; k < p; ++k)
        for (Eigen::Index l = 0; l < p; ++l)
          K(i + j * p, k + l * p) -= Acl(k, i) * Acl(l, j);
  const Vector q = Eigen::Map<const Vector>(Qcl.data(), p * p);
  const Vector vp = K.fullPivLu().solve(q);
  Matrix P = Eigen::Map<const Matrix>(vp.data(), p, p);
  return 0.5 * (P + P.transpose());
}

/// Sum of squared singular values beyond the r largest, via the eigenvalues
/// of X X' (Eckart-Young: the optimal rank-r projection error).
inline double eckart_young_tail(const Matrix& X, Eigen::Index r) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(X * X.transpose(), Eigen::EigenvaluesOnly);
  Vector ev = es.eigenvalues();  // ascending
  double tail = 0.0;
  for (Eigen::Index i = 0; i < ev.size() - r; ++i) tail += std::max(ev(i), 0.0);
  return tail;
}

/// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
inline double rel_diff(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Output sensitivity by central differences on the simulator, column i.
inline Matrix fd_output_sensitivity(const unident::LtiSystem& sys, const Matrix& u,
                                    double step = 1e-6) {
  const Vector theta = unident::extract_params(sys);
  Matrix W(u.rows() * sys.outputs(), theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector tp = theta, tm = theta;
    const double h = step * (1.0 + std::abs(theta(i)));
    tp(i) += h;
    tm(i) -= h;
    const auto sp = unident::apply_params(sys, tp);
    const auto sm = unident::apply_params(sys, tm);
    const Matrix yp = naive_outputs(sp.A, sp.B, sp.C, u, sp.initial_state());
    const Matrix ym = naive_outputs(sm.A, sm.B, sm.C, u, sm.initial_state());
    const Matrix d = (yp - ym) / (2.0 * h);
    for (Eigen::Index t = 0; t < u.rows(); ++t)
      for (Eigen::Index c = 0; c < sys.outputs(); ++c) W(t * sys.outputs() + c, i) = d(t, c);
  }
  return W;
}

}  // namespace oracle
