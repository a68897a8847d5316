#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "unident/system_model.hpp"

namespace unident {

/// J = sum_t y'Qy + u'Ru (+ y(T)' Q_T y(T) over a finite horizon).
struct LqrCost {
  Matrix Q;
  Matrix R;
  std::optional<Matrix> Q_T;
  std::optional<Eigen::Index> horizon;  // empty = infinite

  static LqrCost scalar(Eigen::Index m, Eigen::Index l, double q, double r) {
    return {q * Matrix::Identity(m, m), r * Matrix::Identity(l, l), {}, {}};
  }

  void validate(const LtiSystem& sys) const {
    auto psd = [](const Matrix& M, const char* name, Eigen::Index dim) {
      if (M.rows() != dim || M.cols() != dim) {
        throw Error(ErrorCode::ShapeError, std::string(name) + " must be " +
                                               std::to_string(dim) + "x" +
                                               std::to_string(dim));
      }
      require_finite(M, name);
      if (dim > 0 && (M - M.transpose()).cwiseAbs().maxCoeff() >
                         1e-10 * (1.0 + M.cwiseAbs().maxCoeff())) {
        throw Error(ErrorCode::InvalidMatrix, std::string(name) + " is not symmetric");
      }
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()),
                                               Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-10) {
        throw Error(ErrorCode::InvalidMatrix, std::string(name) + " is not PSD");
      }
    };
    psd(Q, "Q", sys.outputs());
    psd(R, "R", sys.inputs());
    if (Q_T) psd(*Q_T, "Q_T", sys.outputs());
  }
};

enum class ControllerMode { StateFeedbackReduced, PlainLqr };

constexpr const char* mode_name(ControllerMode m) {
  return m == ControllerMode::PlainLqr ? "plain_lqr" : "state_feedback_reduced";
}

/// u(t) = K v(t) with v(t) = V1' x(t) and K = -Lr. K has rank r < l, so every
/// input it emits lies in an r-dimensional subspace of R^l.
struct LowRankController {
  ControllerMode mode = ControllerMode::StateFeedbackReduced;
  Matrix K;   // l x r
  Matrix Lr;  // l x r, gain on the reduced state
  Matrix V1;  // p x r, projection x -> v
  Matrix V2;  // p x r, reconstruction x ~ V2 v
  int r = 0;
  std::uint64_t seed = 0;

  /// Full-state gain G with u = -G x.
  Matrix feedback() const { return Lr * V1.transpose(); }

  Vector input(const Eigen::Ref<const Vector>& x) const {
    return K * (V1.transpose() * x);
  }
};

inline Matrix output_state_cost(const LtiSystem& sys, const Matrix& Q) {
  return sys.C.transpose() * Q * sys.C;
}

/// Infinite-horizon LQR: u = -L0 x with P from the DARE with state cost C'QC.
inline RiccatiSolution lqr_infinite(const LtiSystem& sys, const LqrCost& cost,
                                    const Tolerances& tol = {}) {
  cost.validate(sys);
  return solve_dare(sys.A, sys.B, output_state_cost(sys, cost.Q), cost.R, tol);
}

/// Time-varying gains L_T(0..T-1) by the backward Riccati recursion from
/// P_T = C' Q_T C.
inline std::vector<Matrix> lqr_finite(const LtiSystem& sys, const LqrCost& cost,
                                      Eigen::Index T) {
  cost.validate(sys);
  if (T < 1) throw Error(ErrorCode::ShapeError, "finite horizon must be >= 1");
  const Matrix Qx = output_state_cost(sys, cost.Q);
  const Matrix QT = cost.Q_T ? *cost.Q_T : cost.Q;
  Matrix P = output_state_cost(sys, QT);
  std::vector<Matrix> gains(static_cast<std::size_t>(T));
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    const Matrix BtP = sys.B.transpose() * P;
    const Matrix L = solve_gain_system(cost.R + BtP * sys.B, BtP * sys.A);
    Matrix next = Qx + sys.A.transpose() * P * sys.A -
                  sys.A.transpose() * BtP.transpose() * L;
    P = 0.5 * (next + next.transpose());
    gains[static_cast<std::size_t>(t)] = L;
  }
  return gains;
}

/// Optimal v = -L(K) x for a fixed input factor u = K v:
///   L(K) = (K'RK + K'B'PBK)^-1 K'B'PA, P from the DARE of (A, BK).
inline RiccatiSolution gain_for_K(const LtiSystem& sys, const LqrCost& cost,
                                  const Matrix& K, const Tolerances& tol = {}) {
  cost.validate(sys);
  if (K.rows() != sys.inputs() || K.cols() < 1) {
    throw Error(ErrorCode::ShapeError, "K must be l x r with r >= 1");
  }
  if (svd_rank(K, tol) != K.cols()) {
    throw Error(ErrorCode::RankError, "K is not of full column rank");
  }
  const Matrix BK = sys.B * K;
  auto sol = solve_dare(sys.A, BK, output_state_cost(sys, cost.Q),
                        K.transpose() * cost.R * K, tol);
  if (spectral_radius(sys.A - BK * sol.L) >= 1.0) {
    throw Error(ErrorCode::NotStabilizable,
                "(A, BK) closed loop is not stable");
  }
  return sol;
}

struct PodBasis {
  Matrix V1;
  Matrix V2;
  Vector singular_values;
};

/// Galerkin POD: V1 = V2 = leading r left singular vectors of the snapshot
/// matrix, each column signed so its largest-magnitude entry is positive.
inline PodBasis pod_basis(const Eigen::Ref<const Matrix>& X, Eigen::Index r,
                          const Tolerances& tol = {}) {
  require_finite(X, "snapshots");
  if (r < 1 || X.cols() < r) {
    throw Error(ErrorCode::ShapeError, "POD needs 1 <= r <= snapshot count");
  }
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU);
  const int rank = detail::count_above(svd.singularValues(), X.rows(), X.cols(), tol);
  if (r > rank) {
    throw Error(ErrorCode::RankError, "requested rank " + std::to_string(r) +
                                          " exceeds snapshot rank " +
                                          std::to_string(rank));
  }
  Matrix U = svd.matrixU().leftCols(r);
  for (Eigen::Index c = 0; c < r; ++c) {
    Eigen::Index at = 0;
    U.col(c).cwiseAbs().maxCoeff(&at);
    if (U(at, c) < 0) U.col(c) *= -1.0;
  }
  return {U, U, svd.singularValues()};
}

struct DesignOptions {
  std::optional<int> rank;                  // default l - 1
  std::optional<int> snapshot_runs;         // default p
  std::optional<Eigen::Index> window_begin;  // default 1
  std::optional<Eigen::Index> window_end;    // default 5p
  std::uint64_t seed = 0;
};

/// Snapshot matrix of free responses x(t) = A^t x(0), t in [t1, tT], from
/// random initial states in the unit ball.
inline Matrix collect_snapshots(const LtiSystem& sys, int runs, Eigen::Index t1,
                                Eigen::Index tT, std::uint64_t seed) {
  if (runs < 1 || t1 < 0 || tT < t1) {
    throw Error(ErrorCode::ShapeError, "invalid snapshot schedule");
  }
  const Eigen::Index p = sys.states();
  const Eigen::Index width = tT - t1 + 1;
  Matrix X(p, runs * width);
  for (int run = 0; run < runs; ++run) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(run)));
    Vector x = unit_ball_point(rng, p);
    for (Eigen::Index t = 0; t <= tT; ++t) {
      if (t >= t1) X.col(run * width + (t - t1)) = x;
      x = sys.A * x;
    }
  }
  return X;
}

/// Low-rank LQR by POD order reduction: snapshots -> (V1, V2) -> reduced
/// model (V1'AV2, V1'B, CV2) -> reduced DARE -> u = -Lr V1' x.
/// With p < l and no explicit smaller rank, the plain LQR gain is already
/// low rank and is returned directly.
inline LowRankController design_low_rank(const LtiSystem& sys, const LqrCost& cost,
                                         const DesignOptions& opt = {},
                                         const Tolerances& tol = {}) {
  sys.validate();
  cost.validate(sys);
  const auto p = sys.states();
  const auto l = sys.inputs();

  if (p < l && (!opt.rank || *opt.rank >= p)) {
    const auto sol = lqr_infinite(sys, cost, tol);
    LowRankController ctl;
    ctl.mode = ControllerMode::PlainLqr;
    ctl.Lr = sol.L;
    ctl.K = -sol.L;
    ctl.V1 = Matrix::Identity(p, p);
    ctl.V2 = ctl.V1;
    ctl.r = static_cast<int>(p);
    ctl.seed = opt.seed;
    return ctl;
  }

  const int r = opt.rank.value_or(static_cast<int>(l) - 1);
  if (r < 1 || r >= l || r > p) {
    throw Error(ErrorCode::RankError,
                "controller rank must satisfy 1 <= r < l and r <= p (r = " +
                    std::to_string(r) + ")");
  }
  const int runs = opt.snapshot_runs.value_or(static_cast<int>(p));
  const Eigen::Index t1 = opt.window_begin.value_or(1);
  const Eigen::Index tT = opt.window_end.value_or(5 * p);
  const Matrix X = collect_snapshots(sys, runs, t1, tT, opt.seed);
  const PodBasis pod = pod_basis(X, r, tol);

  const Matrix Ar = pod.V1.transpose() * sys.A * pod.V2;
  const Matrix Br = pod.V1.transpose() * sys.B;
  const Matrix Cr = sys.C * pod.V2;
  const auto reduced =
      solve_dare(Ar, Br, Cr.transpose() * cost.Q * Cr, cost.R, tol);

  LowRankController ctl;
  ctl.mode = ControllerMode::StateFeedbackReduced;
  ctl.Lr = reduced.L;
  ctl.K = -reduced.L;
  ctl.V1 = pod.V1;
  ctl.V2 = pod.V2;
  ctl.r = r;
  ctl.seed = opt.seed;
  if (svd_rank(ctl.K, tol) != r) {
    throw Error(ErrorCode::RankError,
                "reduced gain has rank below " + std::to_string(r) +
                    "; increase the output weighting");
  }
  const double rho = spectral_radius(sys.A - sys.B * ctl.feedback());
  if (rho >= 1.0) {
    throw Error(ErrorCode::ReducedLoopUnstable,
                "reduced-order gain leaves the full plant unstable (spectral "
                "radius " + std::to_string(rho) +
                    "); increase r or the number of snapshots");
  }
  return ctl;
}

/// Numerical rank of the l x T input matrix.
inline int input_rank(const Eigen::Ref<const Matrix>& u, const Tolerances& tol = {}) {
  return svd_rank(u.transpose(), tol);
}

/// Rank of the stacked (l + p) x T matrix [u; x], the persistent-excitation
/// test on a recorded trajectory.
inline int stacked_rank(const Eigen::Ref<const Matrix>& u,
                        const Eigen::Ref<const Matrix>& x,
                        const Tolerances& tol = {}) {
  if (u.rows() != x.rows()) {
    throw Error(ErrorCode::ShapeError, "u and x must have the same horizon");
  }
  Matrix stacked(u.cols() + x.cols(), u.rows());
  stacked.topRows(u.cols()) = u.transpose();
  stacked.bottomRows(x.cols()) = x.transpose();
  return svd_rank(stacked, tol);
}

struct ClosedLoopOptions {
  Eigen::Index steps = 100;
  std::optional<Vector> x0;  // default: the system's x0
  double excitation = 0.0;   // uniform probe added to v(t), stays in range(K)
  std::optional<NoiseSpec> noise;
  std::uint64_t seed = 0;
};

/// Plant under u(t) = K (V1' x(t) + e(t)); e is an optional uniform probe in
/// the controller's reduced coordinates, so u stays in range(K).
inline Trajectory simulate_closed_loop(const LtiSystem& sys,
                                       const LowRankController& ctl,
                                       const ClosedLoopOptions& opt = {}) {
  const Eigen::Index T = opt.steps, p = sys.states();
  if (ctl.K.rows() != sys.inputs() || ctl.V1.rows() != p ||
      ctl.V1.cols() != ctl.K.cols()) {
    throw Error(ErrorCode::ShapeError, "controller does not match the plant");
  }
  Trajectory traj;
  traj.u.resize(T, sys.inputs());
  traj.y.resize(T, sys.outputs());
  traj.x.resize(T, p);
  Rng excite(derive_seed(opt.seed, 0));
  std::optional<Rng> noise_rng;
  if (opt.noise && opt.noise->active()) {
    opt.noise->validate();
    noise_rng.emplace(opt.noise->seed);
    traj.noise_seed = opt.noise->seed;
  }
  Vector x = opt.x0 ? *opt.x0 : sys.initial_state();
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector v = ctl.V1.transpose() * x;
    if (opt.excitation > 0) v += uniform_matrix(excite, v.size(), 1, opt.excitation);
    const Vector u = ctl.K * v;
    Vector y = sys.C * x;
    Vector next = sys.A * x + sys.B * u;
    if (noise_rng) {
      next += uniform_matrix(*noise_rng, p, 1, opt.noise->w_amp);
      y += uniform_matrix(*noise_rng, sys.outputs(), 1, opt.noise->v_amp);
    }
    traj.x.row(t) = x.transpose();
    traj.u.row(t) = u.transpose();
    traj.y.row(t) = y.transpose();
    x = std::move(next);
  }
  return traj;
}

/// Mean of sum_{t<steps} y'Qy + u'Ru over the given initial states under
/// u = -G x. Infinite if the trajectory blows up.
inline double evaluate_cost(const LtiSystem& sys, const LqrCost& cost,
                            const Matrix& G, const std::vector<Vector>& initial_states,
                            Eigen::Index steps) {
  if (initial_states.empty()) return 0.0;
  const Matrix Acl = sys.A - sys.B * G;
  double total = 0.0;
  for (const auto& x0 : initial_states) {
    Vector x = x0;
    for (Eigen::Index t = 0; t < steps; ++t) {
      const Vector y = sys.C * x;
      const Vector u = -G * x;
      total += y.dot(cost.Q * y) + u.dot(cost.R * u);
      x = Acl * x;
      if (!std::isfinite(total)) return std::numeric_limits<double>::infinity();
    }
  }
  return total / static_cast<double>(initial_states.size());
}

}  // namespace unident
