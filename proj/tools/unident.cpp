// Command-line front end: analyze, design, lqr, simulate, attack, montecarlo,
// selftest. Exit codes: 0 success, 1 domain or parse error, 2 usage error.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unident/io.hpp"
#include "unident/unident.hpp"

namespace {

using namespace unident;
using json = nlohmann::json;

std::uint64_t default_seed() {
  if (const char* env = std::getenv("UNIDENT_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, std::string("UNIDENT_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_file(path, text);
  }
}

// Input sequence for analyze and simulate: a CSV file, or a seeded random
// sequence of the requested rank.
struct InputArgs {
  std::string file;
  Eigen::Index horizon = 50;
  std::optional<int> rank;
  double amplitude = 1.0;
};

void add_input_options(CLI::App* cmd, InputArgs& in) {
  cmd->add_option("--input", in.file, "CSV with columns t,u_1..u_l");
  cmd->add_option("--horizon,-T", in.horizon, "length of the random input")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--rank-input", in.rank, "rank of the random input")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--random-input", "use a seeded random input (the default)");
  cmd->add_option("--input-amp", in.amplitude, "amplitude of the random input")
      ->check(CLI::NonNegativeNumber);
}

Matrix resolve_input(const InputArgs& in, const LtiSystem& sys, std::uint64_t seed) {
  if (!in.file.empty()) {
    Matrix u = io::load_trajectory(in.file).u;
    check_input(sys, u);
    return u;
  }
  const int rank = in.rank.value_or(static_cast<int>(sys.inputs()));
  if (rank > sys.inputs()) {
    throw Error(ErrorCode::ShapeError, "--rank-input exceeds the number of inputs");
  }
  Rng rng(seed);
  return random_input(rng, in.horizon, sys.inputs(), rank, in.amplitude);
}

struct CostArgs {
  std::string q = "1", r = "1", qt;
  std::optional<Eigen::Index> horizon;
};

void add_cost_options(CLI::App* cmd, CostArgs& c) {
  cmd->add_option("--q", c.q, "output weight: scalar or JSON matrix");
  cmd->add_option("--r", c.r, "input weight: scalar or JSON matrix");
  cmd->add_option("--qt", c.qt, "terminal output weight (finite horizon)");
  cmd->add_option("--horizon", c.horizon, "finite horizon length")
      ->check(CLI::PositiveNumber);
}

LqrCost resolve_cost(const CostArgs& c, const LtiSystem& sys) {
  LqrCost cost;
  cost.Q = io::parse_weight(c.q, sys.outputs(), "--q");
  cost.R = io::parse_weight(c.r, sys.inputs(), "--r");
  if (!c.qt.empty()) cost.Q_T = io::parse_weight(c.qt, sys.outputs(), "--qt");
  cost.horizon = c.horizon;
  cost.validate(sys);
  return cost;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string system, out, export_dir;
  InputArgs input;
  bool fd = false;
  int probe_samples = 8;
};

int run_analyze(const AnalyzeArgs& a, std::uint64_t seed) {
  const LtiSystem sys = io::load_system(a.system);
  const Matrix u = resolve_input(a.input, sys, seed);
  const Eigen::Index T = u.rows();
  if (T * sys.outputs() < sys.num_params()) {
    std::cerr << "warning: T*m = " << T * sys.outputs() << " < n = " << sys.num_params()
              << "; rank(F) < n is forced by the horizon\n";
  }
  SensitivityBundle b;
  if (a.fd) {
    b = build_bundle_fd(LtiEvaluator(sys), extract_params(sys), u);
  } else {
    b = build_bundle_lti(sys, u);
  }
  auto rep = analyze(b);
  if (a.probe_samples > 0) {
    rep.theorem1_hypothesis_ok =
        rank_constancy_probe(sys, u, {1e-4, a.probe_samples, derive_seed(seed, 1)});
    if (!*rep.theorem1_hypothesis_ok) {
      std::cerr << "warning: rank(F) changes near theta*; the span test is only "
                   "a local statement here\n";
    }
  }
  if (!a.export_dir.empty()) io::export_bundle(a.export_dir, b);
  json out = io::report_to_json(rep);
  out["input_rank"] = input_rank(u);
  emit(a.out, out.dump(2) + "\n");
  return 0;
}

struct LqrArgs {
  std::string system, out;
  CostArgs cost;
};

int run_lqr(const LqrArgs& a) {
  const LtiSystem sys = io::load_system(a.system);
  const LqrCost cost = resolve_cost(a.cost, sys);
  json out;
  if (cost.horizon) {
    const auto gains = lqr_finite(sys, cost, *cost.horizon);
    json arr = json::array();
    for (const auto& L : gains) arr.push_back(io::matrix_to_json(L));
    out = {{"horizon", *cost.horizon}, {"gains", arr}};
  } else {
    const auto sol = lqr_infinite(sys, cost);
    out = {{"P", io::matrix_to_json(sol.P)},
           {"L", io::matrix_to_json(sol.L)},
           {"iterations", sol.iterations},
           {"closed_loop_radius", spectral_radius(sys.A - sys.B * sol.L)}};
  }
  emit(a.out, out.dump(2) + "\n");
  return 0;
}

struct DesignArgs {
  std::string system, out;
  CostArgs cost;
  std::optional<int> rank, snapshots;
  std::optional<Eigen::Index> window_begin, window_end;
};

int run_design(const DesignArgs& a, std::uint64_t seed) {
  const LtiSystem sys = io::load_system(a.system);
  const LqrCost cost = resolve_cost(a.cost, sys);
  DesignOptions opt;
  opt.rank = a.rank;
  opt.snapshot_runs = a.snapshots;
  opt.window_begin = a.window_begin;
  opt.window_end = a.window_end;
  opt.seed = seed;
  const auto ctl = design_low_rank(sys, cost, opt);
  emit(a.out, io::controller_to_json(ctl).dump(2) + "\n");
  return 0;
}

struct SimulateArgs {
  std::string system, controller, out;
  InputArgs input;
  Eigen::Index steps = 100;
  double excite = 0.0, w_amp = 0.0, v_amp = 0.0;
};

int run_simulate(const SimulateArgs& a, std::uint64_t seed) {
  const LtiSystem sys = io::load_system(a.system);
  NoiseSpec noise{a.w_amp, a.v_amp, derive_seed(seed, 2)};
  noise.validate();
  Trajectory traj;
  if (!a.controller.empty()) {
    const auto ctl =
        io::controller_from_json(io::parse_json_text(io::read_file(a.controller), a.controller));
    ClosedLoopOptions opt;
    opt.steps = a.steps;
    opt.excitation = a.excite;
    if (noise.active()) opt.noise = noise;
    opt.seed = seed;
    traj = simulate_closed_loop(sys, ctl, opt);
  } else {
    InputArgs in = a.input;
    if (in.file.empty()) in.horizon = a.steps;
    const Matrix u = resolve_input(in, sys, seed);
    traj = noise.active() ? simulate(sys, u, noise) : simulate(sys, u);
  }
  std::ostringstream ss;
  io::write_trajectory_csv(ss, traj);
  emit(a.out, ss.str());
  return 0;
}

struct AttackArgs {
  std::string trajectory, system, method = "markov", out;
  Eigen::Index train = 950, test = 50, markov_len = 20;
  double ridge = 0.0, lr = 1.0, init_radius = 0.1;
  int iters = 2000;
};

int run_attack(const AttackArgs& a, std::uint64_t seed) {
  Trajectory traj = io::load_trajectory(a.trajectory);
  if (traj.y.cols() == 0) throw Error(ErrorCode::ParseError, "trajectory has no y columns");
  const Eigen::Index T = traj.horizon();
  if (a.train + a.test > T) {
    throw Error(ErrorCode::ShapeError, "train + test = " + std::to_string(a.train + a.test) +
                                           " exceeds the trajectory length " +
                                           std::to_string(T));
  }
  const Eigen::Index used = a.train + a.test;
  traj.u = Matrix(traj.u.topRows(used));
  traj.y = Matrix(traj.y.topRows(used));
  if (traj.x.rows() > 0) traj.x = Matrix(traj.x.topRows(used));

  std::optional<LtiSystem> sys;
  if (!a.system.empty()) sys = io::load_system(a.system);

  IdentResult res;
  if (a.method == "markov") {
    MarkovOptions opt{a.markov_len, a.ridge, a.train};
    std::vector<Matrix> truth;
    if (sys) truth = markov_params(*sys, a.markov_len);
    res = identify_markov(traj, opt, sys ? &truth : nullptr);
  } else {
    if (!sys) throw Error(ErrorCode::ShapeError, "graddesc needs --system as the template");
    GradDescOptions opt;
    opt.lr = a.lr;
    opt.iters = a.iters;
    opt.init_radius = a.init_radius;
    opt.train = a.train;
    opt.seed = seed;
    res = identify_graddesc(*sys, traj, opt);
  }
  json out = io::ident_to_json(res);
  out["train"] = a.train;
  out["test"] = a.test;
  out["train_input_rank"] = input_rank(traj.u.topRows(a.train));
  emit(a.out, out.dump(2) + "\n");
  return 0;
}

struct McArgs {
  std::string family = "s2", method = "graddesc", out;
  std::vector<Eigen::Index> sizes;
  std::vector<int> ranks;
  int runs = 100, jobs = 1, iters = 300;
  Eigen::Index p = 4, l = 4, m = 4, test = 50, markov_len = 20;
  double radius = 0.5, w_amp = 0.0, v_amp = 0.1;
};

int run_montecarlo(const McArgs& a, std::uint64_t seed) {
  MonteCarloPlan plan;
  plan.family = a.family == "s1" ? SystemFamily::S1 : SystemFamily::S2;
  plan.method = a.method == "markov" ? IdentMethod::Markov : IdentMethod::GradDesc;
  plan.p = a.p;
  plan.l = a.l;
  plan.m = a.m;
  plan.spectral_radius = a.radius;
  plan.noise = {a.w_amp, a.v_amp, 0};
  plan.runs = a.runs;
  plan.jobs = a.jobs;
  plan.sample_sizes = a.sizes;
  if (plan.sample_sizes.empty()) {
    for (Eigen::Index n = 5; n <= 100; n += 5) plan.sample_sizes.push_back(n);
  }
  plan.input_ranks = a.ranks;
  plan.test_len = a.test;
  plan.markov.lags = a.markov_len;
  plan.graddesc.iters = a.iters;
  std::ostringstream ss;
  io::write_mc_csv(ss, monte_carlo(plan, seed));
  emit(a.out, ss.str());
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: small checks against closed forms and naive recomputation.

int run_selftest() {
  int failures = 0;
  auto check = [&](const char* name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    if (!ok) ++failures;
  };

  {
    // Scalar DARE P = Q + A^2 P - A^2 P^2 / (R + P), positive root.
    const double A = 0.5, B = 1.0, Q = 1.0, R = 1.0;
    const double b = R * (1.0 - A * A) - Q * B * B;
    const double P = (-b + std::sqrt(b * b + 4.0 * B * B * Q * R)) / (2.0 * B * B);
    const auto sol = solve_dare(Matrix::Constant(1, 1, A), Matrix::Constant(1, 1, B),
                                Matrix::Constant(1, 1, Q), Matrix::Constant(1, 1, R));
    const double err = std::abs(sol.P(0, 0) - P);
    check("scalar_dare", err <= 1e-9, "|P - P_closed| = " + io::format_number(err));
  }
  {
    Rng rng(7);
    const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
    const auto markov = markov_params(sys, 6);
    Matrix Apow = Matrix::Identity(3, 3);
    double worst = 0.0;
    for (const auto& M : markov) {
      worst = std::max(worst, (M - sys.C * Apow * sys.B).norm());
      Apow = sys.A * Apow;
    }
    check("markov_parameters", worst <= 1e-12, "max error " + io::format_number(worst));
    const Matrix u = random_input(rng, 12, 2, 2);
    const double conv = (convolve_markov(markov_params(sys, 12), u) - simulate(sys, u).y).norm();
    check("convolution_matches_simulation", conv <= 1e-10, "error " + io::format_number(conv));
  }
  {
    // Full-mask plant: similarity invariance leaves a p^2-dimensional null space.
    Rng rng(11);
    const LtiSystem sys = random_system(rng, 2, 2, 2, 0.6);
    const auto rep = analyze(build_bundle_lti(sys, random_input(rng, 20, 2, 2)));
    check("similarity_null_space", rep.rank_F == static_cast<int>(sys.num_params()) - 4,
          "rank_F = " + std::to_string(rep.rank_F) + " of " + std::to_string(rep.n));
    check("full_rank_input_dynamic", rep.dynamic_identifiable,
          "Hv_rel = " + io::format_number(rep.residual_Hv_rel));
  }
  return failures == 0 ? 0 : 1;
}

void print_error(bool as_json, const std::string& code, const std::string& detail) {
  if (as_json) {
    std::cerr << json{{"error", code}, {"detail", detail}}.dump() << "\n";
  } else {
    std::cerr << "error: " << code << ": " << detail << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identifiability analysis and low-rank LQR for discrete LTI systems"};
  app.require_subcommand(1);
  bool json_errors = false;
  std::optional<std::uint64_t> seed_opt;
  app.add_flag("--json-errors", json_errors, "print errors as JSON on stderr");
  app.add_option("--seed", seed_opt, "master seed (default: $UNIDENT_SEED or 0)");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "identifiability report for a system and input");
  c_an->add_option("--system,-s", an.system, "system JSON")->required();
  add_input_options(c_an, an.input);
  c_an->add_flag("--fd", an.fd, "build sensitivities by finite differences");
  c_an->add_option("--probe-samples", an.probe_samples, "rank-constancy probe samples (0 = off)")
      ->check(CLI::NonNegativeNumber);
  c_an->add_option("--export-bundle", an.export_dir, "write W, F, H, Ja as CSV to this directory");
  c_an->add_option("--out,-o", an.out, "output path (default stdout)");

  LqrArgs lq;
  auto* c_lq = app.add_subcommand("lqr", "full-rank LQR gain");
  c_lq->add_option("--system,-s", lq.system, "system JSON")->required();
  add_cost_options(c_lq, lq.cost);
  c_lq->add_option("--out,-o", lq.out, "output path (default stdout)");

  DesignArgs de;
  auto* c_de = app.add_subcommand("design", "low-rank controller by POD order reduction");
  c_de->add_option("--system,-s", de.system, "system JSON")->required();
  add_cost_options(c_de, de.cost);
  c_de->add_option("--rank", de.rank, "controller rank r (default l-1)");
  c_de->add_option("--snapshots", de.snapshots, "number of snapshot runs (default p)");
  c_de->add_option("--window-begin", de.window_begin, "first snapshot step (default 1)");
  c_de->add_option("--window-end", de.window_end, "last snapshot step (default 5p)");
  c_de->add_option("--out,-o", de.out, "output path (default stdout)");

  SimulateArgs si;
  auto* c_si = app.add_subcommand("simulate", "simulate open or closed loop, write CSV");
  c_si->add_option("--system,-s", si.system, "system JSON")->required();
  c_si->add_option("--controller,-c", si.controller, "controller JSON (closed loop)");
  add_input_options(c_si, si.input);
  c_si->add_option("--steps", si.steps, "number of steps")->check(CLI::PositiveNumber);
  c_si->add_option("--excite", si.excite, "probe amplitude in reduced coordinates")
      ->check(CLI::NonNegativeNumber);
  c_si->add_option("--w-amp", si.w_amp, "uniform process noise amplitude")
      ->check(CLI::NonNegativeNumber);
  c_si->add_option("--v-amp", si.v_amp, "uniform output noise amplitude")
      ->check(CLI::NonNegativeNumber);
  c_si->add_option("--out,-o", si.out, "output path (default stdout)");

  AttackArgs at;
  auto* c_at = app.add_subcommand("attack", "identify from a logged trajectory");
  c_at->add_option("--trajectory,-t", at.trajectory, "trajectory CSV")->required();
  c_at->add_option("--system,-s", at.system, "true system (template and error reference)");
  c_at->add_option("--method", at.method, "markov or graddesc")
      ->check(CLI::IsMember({"markov", "graddesc"}));
  c_at->add_option("--train", at.train, "training rows")->check(CLI::PositiveNumber);
  c_at->add_option("--test", at.test, "held-out rows after training")
      ->check(CLI::NonNegativeNumber);
  c_at->add_option("--markov-len", at.markov_len, "number of Markov parameters")
      ->check(CLI::PositiveNumber);
  c_at->add_option("--ridge", at.ridge, "ridge weight")->check(CLI::NonNegativeNumber);
  c_at->add_option("--lr", at.lr, "step multiplier (graddesc)")->check(CLI::PositiveNumber);
  c_at->add_option("--iters", at.iters, "iterations (graddesc)")->check(CLI::NonNegativeNumber);
  c_at->add_option("--init-radius", at.init_radius, "initial perturbation (graddesc)")
      ->check(CLI::NonNegativeNumber);
  c_at->add_option("--out,-o", at.out, "output path (default stdout)");

  McArgs mc;
  auto* c_mc = app.add_subcommand("montecarlo", "seeded Monte Carlo identification study");
  c_mc->add_option("--family", mc.family, "s1 (all entries) or s2 (first row of A)")
      ->check(CLI::IsMember({"s1", "s2"}));
  c_mc->add_option("--method", mc.method, "markov or graddesc")
      ->check(CLI::IsMember({"markov", "graddesc"}));
  c_mc->add_option("--runs", mc.runs, "number of runs")->check(CLI::PositiveNumber);
  c_mc->add_option("--sizes", mc.sizes, "training sample sizes (default 5,10,...,100)")
      ->delimiter(',');
  c_mc->add_option("--ranks", mc.ranks, "training-input ranks to sweep")->delimiter(',');
  c_mc->add_option("--states", mc.p, "state dimension")->check(CLI::PositiveNumber);
  c_mc->add_option("--inputs", mc.l, "input dimension")->check(CLI::PositiveNumber);
  c_mc->add_option("--outputs", mc.m, "output dimension")->check(CLI::PositiveNumber);
  c_mc->add_option("--radius", mc.radius, "spectral radius of A")->check(CLI::PositiveNumber);
  c_mc->add_option("--test", mc.test, "held-out rows")->check(CLI::PositiveNumber);
  c_mc->add_option("--markov-len", mc.markov_len, "Markov parameters fitted")
      ->check(CLI::PositiveNumber);
  c_mc->add_option("--iters", mc.iters, "gradient-descent iterations")
      ->check(CLI::NonNegativeNumber);
  c_mc->add_option("--w-amp", mc.w_amp, "process noise amplitude")->check(CLI::NonNegativeNumber);
  c_mc->add_option("--v-amp", mc.v_amp, "output noise amplitude")->check(CLI::NonNegativeNumber);
  c_mc->add_option("--jobs,-j", mc.jobs, "worker threads")->check(CLI::PositiveNumber);
  c_mc->add_option("--out,-o", mc.out, "output path (default stdout)");

  auto* c_st = app.add_subcommand("selftest", "quick numerical sanity checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    if (json_errors) {
      print_error(true, "UsageError", e.what());
    } else {
      app.exit(e);
    }
    return 2;
  }

  try {
    const std::uint64_t seed = seed_opt ? *seed_opt : default_seed();
    if (c_an->parsed()) return run_analyze(an, seed);
    if (c_lq->parsed()) return run_lqr(lq);
    if (c_de->parsed()) return run_design(de, seed);
    if (c_si->parsed()) return run_simulate(si, seed);
    if (c_at->parsed()) return run_attack(at, seed);
    if (c_mc->parsed()) return run_montecarlo(mc, seed);
    if (c_st->parsed()) return run_selftest();
  } catch (const Error& e) {
    print_error(json_errors, std::string(to_string(e.code())), e.detail());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error(json_errors, "ParseError", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(json_errors, "InternalError", e.what());
    return 1;
  }
  return 2;
}
