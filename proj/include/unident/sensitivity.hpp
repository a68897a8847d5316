#pragma once

#include <string>
#include <vector>

#include "unident/system_model.hpp"

namespace unident {

/// Finite-horizon sensitivity data for one (system, input) pair.
///
/// Index conventions:
///   W  (T*m x n)      row k*m + c           = d y_c(k) / d theta_i
///   Ja (T*m x T*l)    row k*m + c, col j*l + a = d y_c(k) / d u_a(j)
///   H  (T*T*l*m x n)  row ((k*T + j)*l + a)*m + c
///                                           = d^2 y_c(k) / d theta_i d u_a(j)
/// Rows of H with j >= k are zero (causality). F = W'W.
struct SensitivityBundle {
  Eigen::Index T = 0;
  Eigen::Index m = 0;
  Eigen::Index l = 0;
  Eigen::Index n = 0;
  Matrix W;
  Matrix F;
  Matrix H;
  Matrix Ja;

  static constexpr Eigen::Index h_row(Eigen::Index k, Eigen::Index j,
                                      Eigen::Index a, Eigen::Index c,
                                      Eigen::Index T, Eigen::Index l,
                                      Eigen::Index m) {
    return ((k * T + j) * l + a) * m + c;
  }
};

/// Row-major flattening of a T x m output history into a T*m vector.
inline Vector flatten_rows(const Eigen::Ref<const Matrix>& y) {
  Vector out(y.size());
  Eigen::Index idx = 0;
  for (Eigen::Index k = 0; k < y.rows(); ++k)
    for (Eigen::Index c = 0; c < y.cols(); ++c) out(idx++) = y(k, c);
  return out;
}

inline void check_param_index(const LtiSystem& sys, Eigen::Index i) {
  if (i < 0 || i >= sys.num_params()) {
    throw Error(ErrorCode::ShapeError,
                "parameter index " + std::to_string(i) + " out of range [0, " +
                    std::to_string(sys.num_params()) + ")");
  }
}

/// d(C A^d B)/d theta_i by the product rule, computed from explicit powers.
inline Matrix g_ijk(const LtiSystem& sys, Eigen::Index i, Eigen::Index d) {
  check_param_index(sys, i);
  if (d < 0) throw Error(ErrorCode::ShapeError, "power must be >= 0");
  const auto& ref = sys.mask[static_cast<std::size_t>(i)];
  const Eigen::Index p = sys.states();
  auto power = [&](Eigen::Index k) {
    Matrix out = Matrix::Identity(p, p);
    for (Eigen::Index s = 0; s < k; ++s) out = out * sys.A;
    return out;
  };
  switch (ref.block) {
    case Block::A: {
      Matrix E = Matrix::Zero(p, p);
      E(ref.row, ref.col) = 1.0;
      Matrix acc = Matrix::Zero(sys.outputs(), sys.inputs());
      for (Eigen::Index s = 0; s < d; ++s) {
        acc += sys.C * power(s) * E * power(d - 1 - s) * sys.B;
      }
      return acc;
    }
    case Block::B: {
      Matrix E = Matrix::Zero(p, sys.inputs());
      E(ref.row, ref.col) = 1.0;
      return sys.C * power(d) * E;
    }
    case Block::C: {
      Matrix E = Matrix::Zero(sys.outputs(), p);
      E(ref.row, ref.col) = 1.0;
      return E * power(d) * sys.B;
    }
  }
  return {};
}

/// Markov-parameter derivatives for all parameters and powers 0..max_power,
/// sharing the cached products C A^s and A^s B.
class MarkovDerivatives {
 public:
  MarkovDerivatives(const LtiSystem& sys, Eigen::Index max_power)
      : sys_(&sys) {
    const auto count = static_cast<std::size_t>(std::max<Eigen::Index>(max_power + 1, 1));
    CA_.reserve(count);
    AB_.reserve(count);
    Matrix ca = sys.C;
    Matrix ab = sys.B;
    for (std::size_t s = 0; s < count; ++s) {
      CA_.push_back(ca);
      AB_.push_back(ab);
      ca = ca * sys.A;
      ab = sys.A * ab;
    }
  }

  Eigen::Index max_power() const {
    return static_cast<Eigen::Index>(CA_.size()) - 1;
  }

  Matrix operator()(Eigen::Index i, Eigen::Index d) const {
    const auto& ref = sys_->mask[static_cast<std::size_t>(i)];
    const auto m = sys_->outputs();
    const auto l = sys_->inputs();
    Matrix g = Matrix::Zero(m, l);
    switch (ref.block) {
      case Block::A:
        for (Eigen::Index s = 0; s < d; ++s) {
          g.noalias() += CA_[static_cast<std::size_t>(s)].col(ref.row) *
                         AB_[static_cast<std::size_t>(d - 1 - s)].row(ref.col);
        }
        break;
      case Block::B:
        g.col(ref.col) = CA_[static_cast<std::size_t>(d)].col(ref.row);
        break;
      case Block::C:
        g.row(ref.row) = AB_[static_cast<std::size_t>(d)].row(ref.col);
        break;
    }
    return g;
  }

 private:
  const LtiSystem* sys_;
  std::vector<Matrix> CA_;
  std::vector<Matrix> AB_;
};

/// Analytic bundle for an LTI system with zero initial state.
inline SensitivityBundle build_bundle_lti(const LtiSystem& sys,
                                          const Eigen::Ref<const Matrix>& u) {
  sys.validate();
  if (!sys.zero_initial_state()) {
    throw Error(ErrorCode::UnsupportedInitialState,
                "analytic sensitivities assume x0 = 0");
  }
  check_input(sys, u);

  SensitivityBundle b;
  b.T = u.rows();
  b.m = sys.outputs();
  b.l = sys.inputs();
  b.n = sys.num_params();
  const auto T = b.T, m = b.m, l = b.l, n = b.n;

  b.W = Matrix::Zero(T * m, n);
  b.H = Matrix::Zero(T * T * l * m, n);
  b.Ja = Matrix::Zero(T * m, T * l);
  if (T == 0) {
    b.F = Matrix::Zero(n, n);
    return b;
  }

  const MarkovDerivatives deriv(sys, std::max<Eigen::Index>(T - 2, 0));
  std::vector<Matrix> g(static_cast<std::size_t>(std::max<Eigen::Index>(T - 1, 0)));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index d = 0; d + 1 < T; ++d) {
      g[static_cast<std::size_t>(d)] = deriv(i, d);
    }
    for (Eigen::Index k = 1; k < T; ++k) {
      Vector acc = Vector::Zero(m);
      for (Eigen::Index j = 0; j < k; ++j) {
        const Matrix& gd = g[static_cast<std::size_t>(k - j - 1)];
        acc.noalias() += gd * u.row(j).transpose();
        for (Eigen::Index a = 0; a < l; ++a) {
          b.H.col(i).segment(SensitivityBundle::h_row(k, j, a, 0, T, l, m), m) =
              gd.col(a);
        }
      }
      b.W.col(i).segment(k * m, m) = acc;
    }
  }

  const auto markov = markov_params(sys, T);
  for (Eigen::Index k = 1; k < T; ++k) {
    for (Eigen::Index j = 0; j < k; ++j) {
      b.Ja.block(k * m, j * l, m, l) = markov[static_cast<std::size_t>(k - j - 1)];
    }
  }
  b.F = b.W.transpose() * b.W;
  return b;
}

/// W alone by forward sensitivity recursion
///   dx(t+1) = A dx(t) + dA x(t) + dB u(t),  dy(t) = C dx(t) + dC x(t).
/// Valid for any initial state; used where H and Ja are not needed.
inline Matrix output_sensitivity(const LtiSystem& sys,
                                 const Eigen::Ref<const Matrix>& u) {
  check_input(sys, u);
  const Eigen::Index T = u.rows(), m = sys.outputs(), n = sys.num_params();
  const Eigen::Index p = sys.states();
  Matrix W = Matrix::Zero(T * m, n);
  Matrix S = Matrix::Zero(p, n);  // d x(t) / d theta
  Vector x = sys.initial_state();
  for (Eigen::Index t = 0; t < T; ++t) {
    Matrix dy = sys.C * S;
    Matrix Snext = sys.A * S;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& ref = sys.mask[static_cast<std::size_t>(i)];
      switch (ref.block) {
        case Block::A: Snext(ref.row, i) += x(ref.col); break;
        case Block::B: Snext(ref.row, i) += u(t, ref.col); break;
        case Block::C: dy(ref.row, i) += x(ref.col); break;
      }
    }
    W.middleRows(t * m, m) = dy;
    x = sys.A * x + sys.B * u.row(t).transpose();
    S = std::move(Snext);
  }
  return W;
}

struct FdOptions {
  double theta_step = 1e-6;  // relative step for W
  double mixed_step = 1e-4;  // relative theta step for H
  double input_step = 1e-3;  // relative step in u for Ja and H
};

namespace detail {

inline Matrix checked_eval(const SystemEvaluator& eval, const Vector& theta,
                           const Matrix& u) {
  Matrix y;
  try {
    y = eval.evaluate(theta, u);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::EvalError, e.what());
  }
  if (y.rows() != u.rows() || y.cols() != eval.outputs() || !y.allFinite()) {
    throw Error(ErrorCode::EvalError,
                "evaluator returned " + shape_of(y) + " or non-finite output");
  }
  return y;
}

inline Matrix fd_input_jacobian(const SystemEvaluator& eval, const Vector& theta,
                                const Matrix& u, const FdOptions& opt) {
  const Eigen::Index T = u.rows(), l = u.cols(), m = eval.outputs();
  Matrix Ja(T * m, T * l);
  Matrix up = u;
  for (Eigen::Index j = 0; j < T; ++j) {
    for (Eigen::Index a = 0; a < l; ++a) {
      const double h = opt.input_step * (1.0 + std::abs(u(j, a)));
      up(j, a) = u(j, a) + h;
      const Matrix yp = checked_eval(eval, theta, up);
      up(j, a) = u(j, a) - h;
      const Matrix ym = checked_eval(eval, theta, up);
      up(j, a) = u(j, a);
      Ja.col(j * l + a) = flatten_rows(yp - ym) / (2.0 * h);
    }
  }
  return Ja;
}

}  // namespace detail

/// Bundle by central finite differences on a black-box evaluator. H is the
/// theta-difference of the input Jacobian; its j >= k rows are set to zero.
inline SensitivityBundle build_bundle_fd(const SystemEvaluator& eval,
                                         const Vector& theta_star,
                                         const Eigen::Ref<const Matrix>& u_in,
                                         const FdOptions& opt = {}) {
  if (theta_star.size() != eval.num_params() || u_in.cols() != eval.inputs()) {
    throw Error(ErrorCode::ShapeError, "theta or input does not match evaluator");
  }
  if (!(opt.theta_step > 0) || !(opt.mixed_step > 0) || !(opt.input_step > 0)) {
    throw Error(ErrorCode::ShapeError, "finite-difference steps must be > 0");
  }
  const Matrix u = u_in;
  SensitivityBundle b;
  b.T = u.rows();
  b.m = eval.outputs();
  b.l = eval.inputs();
  b.n = eval.num_params();
  const auto T = b.T, m = b.m, l = b.l, n = b.n;

  b.W.resize(T * m, n);
  b.H = Matrix::Zero(T * T * l * m, n);
  Vector th = theta_star;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = opt.theta_step * (1.0 + std::abs(theta_star(i)));
    th(i) = theta_star(i) + h;
    const Matrix yp = detail::checked_eval(eval, th, u);
    th(i) = theta_star(i) - h;
    const Matrix ym = detail::checked_eval(eval, th, u);
    b.W.col(i) = flatten_rows(yp - ym) / (2.0 * h);

    const double hm = opt.mixed_step * (1.0 + std::abs(theta_star(i)));
    th(i) = theta_star(i) + hm;
    const Matrix Jp = detail::fd_input_jacobian(eval, th, u, opt);
    th(i) = theta_star(i) - hm;
    const Matrix Jm = detail::fd_input_jacobian(eval, th, u, opt);
    th(i) = theta_star(i);
    const Matrix dJ = (Jp - Jm) / (2.0 * hm);
    for (Eigen::Index k = 1; k < T; ++k)
      for (Eigen::Index j = 0; j < k; ++j)
        for (Eigen::Index a = 0; a < l; ++a)
          for (Eigen::Index c = 0; c < m; ++c)
            b.H(SensitivityBundle::h_row(k, j, a, c, T, l, m), i) =
                dJ(k * m + c, j * l + a);
  }
  b.Ja = detail::fd_input_jacobian(eval, theta_star, u, opt);
  b.F = b.W.transpose() * b.W;
  return b;
}

}  // namespace unident
