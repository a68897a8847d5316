#pragma once

#include <cstdint>
#include <random>

#include "unident/numerics.hpp"

namespace unident {

using Rng = std::mt19937_64;

/// Independent stream seed for (master, index), so per-run streams do not
/// depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  // Row-major fill order keeps draws stable if storage order ever changes.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

inline Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                             double amp) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

/// Uniform sample from the closed unit ball in R^dim.
inline Vector unit_ball_point(Rng& rng, Eigen::Index dim) {
  Vector v = normal_matrix(rng, dim, 1);
  const double nrm = v.norm();
  if (nrm == 0.0) return Vector::Zero(dim);
  const double radius =
      std::pow(uniform(rng, 0.0, 1.0), 1.0 / static_cast<double>(dim));
  return v * (radius / nrm);
}

/// T x l input whose first `rank` channels are i.i.d. uniform on [-amp, amp]
/// and whose remaining channels are random linear combinations of those.
inline Matrix random_input(Rng& rng, Eigen::Index T, Eigen::Index l,
                           Eigen::Index rank, double amp = 1.0) {
  rank = std::clamp<Eigen::Index>(rank, 0, l);
  Matrix u = Matrix::Zero(T, l);
  if (rank == 0) return u;
  u.leftCols(rank) = uniform_matrix(rng, T, rank, amp);
  if (rank < l) {
    const Matrix mix = normal_matrix(rng, rank, l - rank);
    u.rightCols(l - rank) = u.leftCols(rank) * mix;
  }
  return u;
}

/// Square matrix with i.i.d. normal entries rescaled to the given spectral
/// radius.
inline Matrix random_state_matrix(Rng& rng, Eigen::Index p, double radius) {
  Matrix A = normal_matrix(rng, p, p);
  const double rho = spectral_radius(A);
  if (rho > 0) A *= radius / rho;
  return A;
}

}  // namespace unident
