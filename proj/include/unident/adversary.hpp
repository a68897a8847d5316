#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "unident/sensitivity.hpp"

namespace unident {

/// Outcome of one identification attempt.
struct IdentResult {
  std::string method;  // "markov_ls" or "grad_descent"
  std::vector<Matrix> markov;
  std::optional<Vector> theta_hat;
  std::optional<double> param_error;
  std::optional<double> markov_error;
  std::optional<double> pred_error;
  int regressor_rank = 0;
  int iterations = 0;
  double final_loss = 0.0;
};

/// max_k ||est_k - truth_k||_F / (1 + ||truth_k||_F)
inline double markov_error(const std::vector<Matrix>& est,
                           const std::vector<Matrix>& truth) {
  const std::size_t K = std::min(est.size(), truth.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    worst = std::max(worst, (est[k] - truth[k]).norm() / (1.0 + truth[k].norm()));
  }
  return worst;
}

/// Relative RMS error sqrt(sum |yhat - y|^2 / sum |y|^2); the absolute RMS when
/// y is identically zero.
inline double relative_rms(const Eigen::Ref<const Matrix>& yhat,
                           const Eigen::Ref<const Matrix>& y) {
  const double num = (yhat - y).norm();
  const double den = y.norm();
  if (den > 0) return num / den;
  return y.size() > 0 ? num / std::sqrt(static_cast<double>(y.size())) : 0.0;
}

struct MarkovOptions {
  Eigen::Index lags = 20;            // number of Markov parameters fitted
  double ridge = 0.0;
  std::optional<Eigen::Index> train;  // rows used for fitting; rest are test
};

inline Eigen::Index train_rows(const Trajectory& traj,
                               const std::optional<Eigen::Index>& train) {
  const Eigen::Index T = traj.horizon();
  const Eigen::Index n = train.value_or(T);
  if (n < 1 || n > T) {
    throw Error(ErrorCode::ShapeError, "training length must be in [1, T]");
  }
  return n;
}

/// Least-squares fit of M_0..M_{lags-1} to y(k) = sum_d M_d u(k-d-1), assuming
/// zero initial state. Rank-deficient regressors get the minimum-norm
/// solution.
inline IdentResult identify_markov(const Trajectory& traj, const MarkovOptions& opt,
                                   const std::vector<Matrix>* truth = nullptr,
                                   const Tolerances& tol = {}) {
  if (opt.lags < 1 || !(opt.ridge >= 0)) {
    throw Error(ErrorCode::ShapeError, "markov fit needs lags >= 1, ridge >= 0");
  }
  require_finite(traj.u, "u");
  require_finite(traj.y, "y");
  const Eigen::Index N = train_rows(traj, opt.train);
  const Eigen::Index l = traj.u.cols(), m = traj.y.cols();
  const Eigen::Index cols = opt.lags * l;

  Matrix Phi = Matrix::Zero(N, cols);
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index d = 0; d < opt.lags && k - d - 1 >= 0; ++d) {
      Phi.block(k, d * l, 1, l) = traj.u.row(k - d - 1);
    }
  }
  const Matrix Y = traj.y.topRows(N);

  IdentResult res;
  res.method = "markov_ls";
  Matrix coef = Matrix::Zero(cols, m);
  if (N > 0 && cols > 0) {
    Eigen::JacobiSVD<Matrix> svd(Phi, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    res.regressor_rank = detail::count_above(s, N, cols, tol);
    Vector inv = Vector::Zero(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      if (opt.ridge > 0) {
        inv(i) = s(i) / (s(i) * s(i) + opt.ridge);
      } else if (i < res.regressor_rank) {
        inv(i) = 1.0 / s(i);
      }
    }
    coef = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * Y);
  }
  res.markov.reserve(static_cast<std::size_t>(opt.lags));
  for (Eigen::Index d = 0; d < opt.lags; ++d) {
    res.markov.push_back(coef.middleRows(d * l, l).transpose());
  }
  const Matrix yhat = convolve_markov(res.markov, traj.u);
  res.final_loss = (yhat.topRows(N) - Y).squaredNorm();
  if (N < traj.horizon()) {
    const Eigen::Index Tt = traj.horizon() - N;
    res.pred_error = relative_rms(yhat.bottomRows(Tt), traj.y.bottomRows(Tt));
  }
  if (truth) res.markov_error = markov_error(res.markov, *truth);
  return res;
}

struct GradDescOptions {
  double lr = 1.0;           // multiple of the exact line-search step
  int iters = 2000;
  double init_radius = 0.1;  // relative to the RMS parameter magnitude
  std::optional<Eigen::Index> train;
  std::uint64_t seed = 0;
};

/// Steepest descent on sum_t |yhat(t) - y(t)|^2 over the masked parameters,
/// with gradients from the analytic output sensitivity. Starts at
/// theta* + uniform perturbation, where theta* is the template's parameter
/// vector (the truth the errors are measured against).
inline IdentResult identify_graddesc(const LtiSystem& templ, const Trajectory& traj,
                                     const GradDescOptions& opt = {}) {
  templ.validate();
  if (!(opt.lr > 0) || opt.iters < 0 || !(opt.init_radius >= 0)) {
    throw Error(ErrorCode::ShapeError, "gradient descent needs lr > 0, iters >= 0");
  }
  const Eigen::Index N = train_rows(traj, opt.train);
  const Matrix u_train = traj.u.topRows(N);
  const Vector y_train = flatten_rows(traj.y.topRows(N));
  const Vector theta_star = extract_params(templ);
  const Eigen::Index n = theta_star.size();

  Rng rng(opt.seed);
  const double scale = theta_star.norm() / std::sqrt(static_cast<double>(n));
  Vector theta = theta_star;
  for (Eigen::Index i = 0; i < n; ++i) {
    theta(i) += opt.init_radius * scale * uniform(rng, -1.0, 1.0);
  }

  auto residual = [&](const Vector& th) {
    return Vector(y_train - flatten_rows(simulate(apply_params(templ, th), u_train).y));
  };
  auto check = [](double loss) {
    if (!std::isfinite(loss) || loss > 1e12) {
      throw Error(ErrorCode::Diverged, "loss exceeded 1e12");
    }
  };

  IdentResult res;
  res.method = "grad_descent";
  Vector r = residual(theta);
  double loss = r.squaredNorm();
  check(loss);
  int it = 0;
  for (; it < opt.iters; ++it) {
    const Matrix W = output_sensitivity(apply_params(templ, theta), u_train);
    const Vector g = W.transpose() * r;  // -1/2 gradient of the loss
    const double wg = (W * g).squaredNorm();
    if (!(wg > 0)) break;
    double step = opt.lr * g.squaredNorm() / wg;
    bool moved = false;
    for (int halve = 0; halve < 40; ++halve) {
      const Vector cand = theta + step * g;
      const Vector rc = residual(cand);
      const double lc = rc.squaredNorm();
      if (std::isfinite(lc) && lc <= loss) {
        moved = (cand - theta).norm() > 1e-15 * (1.0 + theta.norm());
        theta = cand;
        r = rc;
        loss = lc;
        break;
      }
      step *= 0.5;
    }
    check(loss);
    if (!moved) break;
  }
  res.iterations = it;
  res.final_loss = loss;
  res.theta_hat = theta;
  const double tnorm = theta_star.norm();
  res.param_error = (theta - theta_star).norm() / (tnorm > 0 ? tnorm : 1.0);
  if (N < traj.horizon()) {
    const Matrix yhat = simulate(apply_params(templ, theta), traj.u).y;
    const Eigen::Index Tt = traj.horizon() - N;
    res.pred_error = relative_rms(yhat.bottomRows(Tt), traj.y.bottomRows(Tt));
  }
  return res;
}

enum class SystemFamily { S1, S2 };  // S1: every entry free; S2: first row of A
enum class IdentMethod { Markov, GradDesc };

inline const char* family_name(SystemFamily f) { return f == SystemFamily::S1 ? "s1" : "s2"; }
inline const char* method_name(IdentMethod m) {
  return m == IdentMethod::Markov ? "markov" : "graddesc";
}

struct MonteCarloPlan {
  SystemFamily family = SystemFamily::S2;
  Eigen::Index p = 4, l = 4, m = 4;
  double spectral_radius = 0.5;
  IdentMethod method = IdentMethod::GradDesc;
  NoiseSpec noise;  // amplitudes only; seeds are derived per run
  int runs = 100;
  std::vector<Eigen::Index> sample_sizes;
  std::vector<int> input_ranks;  // training-input ranks; empty = {l}
  Eigen::Index test_len = 50;
  MarkovOptions markov;
  GradDescOptions graddesc;
  int jobs = 1;
};

struct McRow {
  Eigen::Index sample_size = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  int runs = 0;
};

namespace detail {

struct McSample {
  std::string metric;
  Eigen::Index sample_size;
  std::optional<double> value;  // empty when the run failed
};

inline LtiSystem family_system(const MonteCarloPlan& plan, Rng& rng) {
  LtiSystem sys = random_system(rng, plan.p, plan.l, plan.m, plan.spectral_radius);
  sys.mask = plan.family == SystemFamily::S1 ? full_mask(plan.p, plan.l, plan.m)
                                             : first_row_mask(plan.p);
  return sys;
}

// Output-noise estimation floor sigma_v sqrt(tr F^-1) / |theta*|.
inline double noise_floor(const LtiSystem& sys, const Matrix& u, double v_amp) {
  if (!(v_amp > 0)) return 0.0;
  const Matrix W = output_sensitivity(sys, u);
  const Matrix F = W.transpose() * W;
  Eigen::LDLT<Matrix> ldlt(F);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0)) {
    return std::numeric_limits<double>::infinity();
  }
  const double tr = ldlt.solve(Matrix::Identity(F.rows(), F.cols())).trace();
  const double sigma = v_amp / std::sqrt(3.0);
  return sigma * std::sqrt(tr) / extract_params(sys).norm();
}

inline std::vector<McSample> mc_run(const MonteCarloPlan& plan,
                                    const std::vector<int>& ranks,
                                    std::uint64_t run_seed) {
  std::vector<McSample> out;
  Rng rng(run_seed);
  const LtiSystem sys = family_system(plan, rng);
  const Eigen::Index n_max =
      *std::max_element(plan.sample_sizes.begin(), plan.sample_sizes.end());
  const auto truth = markov_params(sys, plan.markov.lags);

  for (int rank : ranks) {
    Rng in_rng(derive_seed(run_seed, 100 + static_cast<std::uint64_t>(rank)));
    const Matrix u_train = random_input(in_rng, n_max, plan.l, rank);
    const Matrix u_test = random_input(in_rng, plan.test_len, plan.l, plan.l);
    const std::string suffix =
        ranks.size() > 1 ? "_rank" + std::to_string(rank) : std::string();
    for (Eigen::Index N : plan.sample_sizes) {
      Matrix u(N + plan.test_len, plan.l);
      u.topRows(N) = u_train.topRows(N);
      u.bottomRows(plan.test_len) = u_test;
      NoiseSpec noise = plan.noise;
      noise.seed = derive_seed(run_seed, 200 + static_cast<std::uint64_t>(rank));
      auto record = [&](const std::string& metric, std::optional<double> v) {
        out.push_back({metric + suffix, N, v});
      };
      try {
        const Trajectory traj = simulate(sys, u, noise);
        if (plan.method == IdentMethod::Markov) {
          MarkovOptions mo = plan.markov;
          mo.train = N;
          const auto res = identify_markov(traj, mo, &truth);
          record("markov_error", res.markov_error);
          record("pred_error", res.pred_error);
        } else {
          GradDescOptions go = plan.graddesc;
          go.train = N;
          go.seed = derive_seed(run_seed, 300 + static_cast<std::uint64_t>(N));
          const auto res = identify_graddesc(sys, traj, go);
          record("param_error", res.param_error);
          record("pred_error", res.pred_error);
          record("noise_floor", noise_floor(sys, u.topRows(N), plan.noise.v_amp));
        }
      } catch (const Error&) {
        if (plan.method == IdentMethod::Markov) {
          record("markov_error", std::nullopt);
        } else {
          record("param_error", std::nullopt);
        }
        record("pred_error", std::nullopt);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Seeded Monte Carlo over random systems of a family: identify at each
/// sample size (and training-input rank), aggregate mean and sample standard
/// deviation per metric. Run i draws from derive_seed(seed, i) only, so the
/// table does not depend on `jobs`.
inline std::vector<McRow> monte_carlo(const MonteCarloPlan& plan, std::uint64_t seed) {
  if (plan.runs < 1 || plan.sample_sizes.empty() || plan.test_len < 1) {
    throw Error(ErrorCode::ShapeError,
                "monte carlo needs runs >= 1, sample sizes and a test split");
  }
  plan.noise.validate();
  std::vector<int> ranks = plan.input_ranks;
  if (ranks.empty()) ranks.push_back(static_cast<int>(plan.l));

  std::vector<std::vector<detail::McSample>> per_run(static_cast<std::size_t>(plan.runs));
  const int jobs = std::clamp(plan.jobs, 1, plan.runs);
  auto worker = [&](int w) {
    for (int i = w; i < plan.runs; i += jobs) {
      per_run[static_cast<std::size_t>(i)] =
          detail::mc_run(plan, ranks, derive_seed(seed, static_cast<std::uint64_t>(i)));
    }
  };
  if (jobs == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }

  // Aggregate in (first-seen metric order, sample size) with runs in index order.
  std::vector<McRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& run : per_run) {
    for (const auto& s : run) {
      auto it = std::find_if(rows.begin(), rows.end(), [&](const McRow& r) {
        return r.metric == s.metric && r.sample_size == s.sample_size;
      });
      std::size_t idx;
      if (it == rows.end()) {
        rows.push_back({s.sample_size, s.metric, 0.0, 0.0, 0});
        values.emplace_back();
        idx = rows.size() - 1;
      } else {
        idx = static_cast<std::size_t>(it - rows.begin());
      }
      if (s.value && std::isfinite(*s.value)) values[idx].push_back(*s.value);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    rows[i].runs = static_cast<int>(v.size());
    if (v.empty()) {
      rows[i].mean = std::numeric_limits<double>::quiet_NaN();
      rows[i].std = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const McRow& a, const McRow& b) {
    return a.metric != b.metric ? a.metric < b.metric : a.sample_size < b.sample_size;
  });
  return rows;
}

}  // namespace unident
