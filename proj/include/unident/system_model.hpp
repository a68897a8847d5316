#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unident/numerics.hpp"
#include "unident/random.hpp"

namespace unident {

enum class Block { A, B, C };

constexpr const char* block_name(Block b) {
  switch (b) {
    case Block::A: return "A";
    case Block::B: return "B";
    case Block::C: return "C";
  }
  return "?";
}

/// One free parameter: entry (row, col) of A, B or C.
struct ParamRef {
  Block block = Block::A;
  int row = 0;
  int col = 0;

  friend bool operator==(const ParamRef&, const ParamRef&) = default;
};

using ParamMask = std::vector<ParamRef>;

/// x(t+1) = A x(t) + B u(t),  y(t) = C x(t),  with the entries listed in
/// `mask` forming the parameter vector theta (in mask order).
struct LtiSystem {
  Matrix A;
  Matrix B;
  Matrix C;
  ParamMask mask;
  Vector x0;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }
  Eigen::Index num_params() const {
    return static_cast<Eigen::Index>(mask.size());
  }

  const Matrix& block(Block b) const {
    return b == Block::A ? A : (b == Block::B ? B : C);
  }
  Matrix& block(Block b) { return b == Block::A ? A : (b == Block::B ? B : C); }

  bool zero_initial_state() const { return x0.size() == 0 || x0.isZero(0.0); }

  Vector initial_state() const {
    return x0.size() == 0 ? Vector::Zero(states()) : x0;
  }

  void validate() const {
    require_square(A, "A");
    const auto p = states();
    if (B.rows() != p || C.cols() != p || B.cols() < 1 || C.rows() < 1 ||
        p < 1) {
      throw Error(ErrorCode::ShapeError,
                  "inconsistent system shapes: A " + shape_of(A) + ", B " +
                      shape_of(B) + ", C " + shape_of(C));
    }
    if (x0.size() != 0 && x0.size() != p) {
      throw Error(ErrorCode::ShapeError, "x0 must have " + std::to_string(p) +
                                             " entries");
    }
    require_finite(A, "A");
    require_finite(B, "B");
    require_finite(C, "C");
    if (x0.size() != 0) require_finite(x0, "x0");
    if (mask.empty()) {
      throw Error(ErrorCode::ShapeError, "parameter mask is empty");
    }
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const auto& ref = mask[i];
      const Matrix& m = block(ref.block);
      if (ref.row < 0 || ref.col < 0 || ref.row >= m.rows() ||
          ref.col >= m.cols()) {
        throw Error(ErrorCode::ShapeError,
                    std::string("mask entry ") + block_name(ref.block) + "[" +
                        std::to_string(ref.row) + "," +
                        std::to_string(ref.col) + "] out of range");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (mask[j] == ref) {
          throw Error(ErrorCode::ShapeError, "duplicate mask entry");
        }
      }
    }
  }
};

inline ParamMask block_mask(Block b, Eigen::Index rows, Eigen::Index cols) {
  ParamMask mask;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) mask.push_back({b, i, j});
  return mask;
}

/// Every entry of A, then B, then C (row-major within each block).
inline ParamMask full_mask(Eigen::Index p, Eigen::Index l, Eigen::Index m) {
  ParamMask mask = block_mask(Block::A, p, p);
  const auto b = block_mask(Block::B, p, l);
  const auto c = block_mask(Block::C, m, p);
  mask.insert(mask.end(), b.begin(), b.end());
  mask.insert(mask.end(), c.begin(), c.end());
  return mask;
}

/// Only the first row of A is free.
inline ParamMask first_row_mask(Eigen::Index p) {
  return block_mask(Block::A, 1, p);
}

inline Vector extract_params(const LtiSystem& sys) {
  Vector theta(sys.num_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto& ref = sys.mask[static_cast<std::size_t>(i)];
    theta(i) = sys.block(ref.block)(ref.row, ref.col);
  }
  return theta;
}

inline LtiSystem apply_params(const LtiSystem& sys,
                              const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != sys.num_params()) {
    throw Error(ErrorCode::ShapeError,
                "theta has " + std::to_string(theta.size()) +
                    " entries, mask has " + std::to_string(sys.num_params()));
  }
  LtiSystem out = sys;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const auto& ref = sys.mask[static_cast<std::size_t>(i)];
    out.block(ref.block)(ref.row, ref.col) = theta(i);
  }
  return out;
}

/// Additive uniform noise on [-amp, amp]: w on the state update, v on the
/// output.
struct NoiseSpec {
  double w_amp = 0.0;
  double v_amp = 0.0;
  std::uint64_t seed = 0;

  bool active() const { return w_amp > 0.0 || v_amp > 0.0; }

  void validate() const {
    if (!(w_amp >= 0.0) || !(v_amp >= 0.0)) {
      throw Error(ErrorCode::ShapeError, "noise amplitudes must be >= 0");
    }
  }
};

/// Logged data, one row per time step.
struct Trajectory {
  Matrix u;  // T x l
  Matrix y;  // T x m
  Matrix x;  // T x p, or empty when states were not recorded
  std::optional<std::uint64_t> noise_seed;

  Eigen::Index horizon() const { return u.rows(); }
};

inline void check_input(const LtiSystem& sys, const Eigen::Ref<const Matrix>& u) {
  if (u.cols() != sys.inputs()) {
    throw Error(ErrorCode::ShapeError,
                "input has " + std::to_string(u.cols()) + " channels, system " +
                    "expects " + std::to_string(sys.inputs()));
  }
  require_finite(u, "input");
}

inline Trajectory simulate(const LtiSystem& sys, const Eigen::Ref<const Matrix>& u,
                           const std::optional<NoiseSpec>& noise = std::nullopt) {
  check_input(sys, u);
  const Eigen::Index T = u.rows();
  Trajectory traj;
  traj.u = u;
  traj.y.resize(T, sys.outputs());
  traj.x.resize(T, sys.states());

  std::optional<Rng> rng;
  if (noise) noise->validate();
  if (noise && noise->active()) {
    rng.emplace(noise->seed);
    traj.noise_seed = noise->seed;
  }
  Vector x = sys.initial_state();
  for (Eigen::Index t = 0; t < T; ++t) {
    traj.x.row(t) = x.transpose();
    Vector y = sys.C * x;
    Vector next = sys.A * x + sys.B * u.row(t).transpose();
    if (rng) {
      // draw order per step: w(t) then v(t)
      next += uniform_matrix(*rng, sys.states(), 1, noise->w_amp);
      y += uniform_matrix(*rng, sys.outputs(), 1, noise->v_amp);
    }
    traj.y.row(t) = y.transpose();
    x = std::move(next);
  }
  return traj;
}

/// Impulse-response coefficients M_k = C A^k B for k = 0..T-1.
inline std::vector<Matrix> markov_params(const LtiSystem& sys, Eigen::Index T) {
  if (T < 1) throw Error(ErrorCode::ShapeError, "markov horizon must be >= 1");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(T));
  Matrix AkB = sys.B;
  for (Eigen::Index k = 0; k < T; ++k) {
    out.push_back(sys.C * AkB);
    AkB = sys.A * AkB;
  }
  return out;
}

/// Zero-initial-state output y(k) = sum_{i<k} M_{k-i-1} u(i). Coefficients
/// beyond the supplied list are treated as zero.
inline Matrix convolve_markov(const std::vector<Matrix>& markov,
                              const Eigen::Ref<const Matrix>& u) {
  const Eigen::Index T = u.rows();
  const Eigen::Index m = markov.empty() ? 0 : markov.front().rows();
  Matrix y = Matrix::Zero(T, m);
  const auto K = static_cast<Eigen::Index>(markov.size());
  for (Eigen::Index k = 1; k < T; ++k) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, k - K);
    for (Eigen::Index i = lo; i < k; ++i) {
      y.row(k).noalias() +=
          (markov[static_cast<std::size_t>(k - i - 1)] * u.row(i).transpose())
              .transpose();
    }
  }
  return y;
}

/// Black-box parameterized system: maps (theta, input history) to the output
/// history. Consumed by the finite-difference sensitivity path.
class SystemEvaluator {
 public:
  virtual ~SystemEvaluator() = default;
  virtual Eigen::Index num_params() const = 0;
  virtual Eigen::Index inputs() const = 0;
  virtual Eigen::Index outputs() const = 0;
  /// T x m outputs for the T x l input `u` under parameters `theta`.
  virtual Matrix evaluate(const Vector& theta, const Matrix& u) const = 0;
};

class LtiEvaluator final : public SystemEvaluator {
 public:
  explicit LtiEvaluator(LtiSystem sys) : sys_(std::move(sys)) { sys_.validate(); }

  Eigen::Index num_params() const override { return sys_.num_params(); }
  Eigen::Index inputs() const override { return sys_.inputs(); }
  Eigen::Index outputs() const override { return sys_.outputs(); }

  Matrix evaluate(const Vector& theta, const Matrix& u) const override {
    return simulate(apply_params(sys_, theta), u).y;
  }

 private:
  LtiSystem sys_;
};

/// Random system with A rescaled to the given spectral radius and standard
/// normal B, C. The mask defaults to every entry.
inline LtiSystem random_system(Rng& rng, Eigen::Index p, Eigen::Index l,
                               Eigen::Index m, double radius) {
  LtiSystem sys;
  sys.A = random_state_matrix(rng, p, radius);
  sys.B = normal_matrix(rng, p, l);
  sys.C = normal_matrix(rng, m, p);
  sys.mask = full_mask(p, l, m);
  sys.x0 = Vector::Zero(p);
  return sys;
}

}  // namespace unident
