#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unident/sensitivity.hpp"

namespace unident {

struct ParamVerdict {
  Eigen::Index index = 0;
  bool identifiable = false;
};

struct IdentifiabilityReport {
  Eigen::Index n = 0;
  Eigen::Index T = 0;
  int rank_F = 0;
  std::vector<ParamVerdict> per_param;
  bool param_identifiable = false;
  bool dynamic_identifiable = false;
  std::optional<Vector> witness;
  Matrix null_basis;           // orthonormal basis of N(W) = N(F)
  double residual_Wv = 0.0;    // ||W v||
  double residual_Hv_rel = 0.0;  // ||H v|| / ||H||_F
  std::optional<bool> theorem1_hypothesis_ok;
};

/// phi = P' theta; the first r coordinates are identifiable, the trailing
/// n - r are not.
struct Reparameterization {
  Matrix P;
  int r = 0;
  std::string method;
};

/// Numerical rank of F = W'W, evaluated on the factor W. Forming F squares
/// the condition number, so this is where the rank is resolvable.
inline int fim_rank(const SensitivityBundle& b, const Tolerances& tol = {}) {
  return svd_rank(b.W, tol);
}

inline Matrix drop_column(const Eigen::Ref<const Matrix>& m, Eigen::Index i) {
  Matrix out(m.rows(), m.cols() - 1);
  out.leftCols(i) = m.leftCols(i);
  out.rightCols(m.cols() - 1 - i) = m.rightCols(m.cols() - 1 - i);
  return out;
}

/// theta_i is identifiable iff its sensitivity column is not in the span of
/// the other columns.
inline bool param_identifiable(const SensitivityBundle& b, Eigen::Index i,
                               const Tolerances& tol = {}) {
  if (i < 0 || i >= b.n) {
    throw Error(ErrorCode::ShapeError, "parameter index out of range");
  }
  return !in_span(b.W.col(i), drop_column(b.W, i), tol);
}

namespace detail {

// svd_rank of a column subset of W, evaluated on the triangular factor of W
// but thresholded with W's own dimensions.
inline int subset_rank(const Matrix& R, Eigen::Index w_rows, const Tolerances& tol) {
  if (R.cols() == 0) return 0;
  const auto svd = thin_svd(R, 0);
  return count_above(svd.singularValues(), w_rows, R.cols(), tol);
}

}  // namespace detail

inline IdentifiabilityReport analyze(const SensitivityBundle& b,
                                     const Tolerances& tol = {}) {
  tol.validate();
  require_finite(b.W, "W");
  require_finite(b.H, "H");
  IdentifiabilityReport rep;
  rep.n = b.n;
  rep.T = b.T;
  rep.rank_F = fim_rank(b, tol);
  rep.param_identifiable = rep.rank_F == b.n;

  // Same singular values as W's column subsets, at a fraction of the cost.
  Matrix R;
  if (b.W.rows() > b.W.cols()) {
    Eigen::HouseholderQR<Matrix> qr(b.W);
    R = qr.matrixQR().topRows(b.n).triangularView<Eigen::Upper>();
  } else {
    R = b.W;
  }
  const Eigen::Index rows = b.W.rows();
  const int full = detail::subset_rank(R, rows, tol);
  rep.per_param.reserve(static_cast<std::size_t>(b.n));
  for (Eigen::Index i = 0; i < b.n; ++i) {
    const Matrix Ri = drop_column(R, i);
    rep.per_param.push_back({i, detail::subset_rank(Ri, rows, tol) < full});
  }

  rep.null_basis = null_space_basis(b.W, tol);
  const double h_norm = b.H.norm();
  const double cut = tol.residual_eps * h_norm;
  rep.dynamic_identifiable = true;
  Eigen::Index best = -1;
  double best_hb = -1.0;
  for (Eigen::Index c = 0; c < rep.null_basis.cols(); ++c) {
    const double hb = (b.H * rep.null_basis.col(c)).norm();
    if (hb > best_hb) {
      best_hb = hb;
      best = c;
    }
    if (hb > cut) rep.dynamic_identifiable = false;
  }
  if (best >= 0) {
    const Vector v = rep.null_basis.col(best);
    rep.residual_Wv = (b.W * v).norm();
    rep.residual_Hv_rel = h_norm > 0 ? best_hb / h_norm : 0.0;
    if (!rep.dynamic_identifiable) rep.witness = v;
  }
  return rep;
}

/// P = [basis of range(F) | basis of N(F)] from the right singular vectors
/// of W, ordered by decreasing singular value.
inline Reparameterization reparameterize(const SensitivityBundle& b,
                                         const Tolerances& tol = {}) {
  require_finite(b.W, "W");
  Reparameterization out;
  out.method = "svd_of_sensitivity";
  if (b.W.rows() == 0) {
    out.P = Matrix::Identity(b.n, b.n);
    out.r = 0;
    return out;
  }
  const auto svd = detail::thin_svd(b.W, Eigen::ComputeFullV);
  out.r = detail::count_above(svd.singularValues(), b.W.rows(), b.n, tol);
  out.P = svd.matrixV();
  return out;
}

struct ProbeOptions {
  double jitter = 1e-4;  // relative radius
  int samples = 8;
  std::uint64_t seed = 0;
};

/// Numerical surrogate for "rank(F) is constant near theta*": recompute the
/// rank at uniformly jittered parameters.
inline bool rank_constancy_probe(const LtiSystem& sys,
                                 const Eigen::Ref<const Matrix>& u,
                                 const ProbeOptions& opt = {},
                                 const Tolerances& tol = {}) {
  if (opt.samples < 1 || !(opt.jitter > 0)) {
    throw Error(ErrorCode::ShapeError, "probe needs samples >= 1, jitter > 0");
  }
  sys.validate();
  const Vector theta = extract_params(sys);
  const int base = svd_rank(output_sensitivity(sys, u), tol);
  Rng rng(opt.seed);
  for (int s = 0; s < opt.samples; ++s) {
    Vector th = theta;
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      th(i) += opt.jitter * (1.0 + std::abs(theta(i))) * uniform(rng, -1.0, 1.0);
    }
    if (svd_rank(output_sensitivity(apply_params(sys, th), u), tol) != base) {
      return false;
    }
  }
  return true;
}

}  // namespace unident
