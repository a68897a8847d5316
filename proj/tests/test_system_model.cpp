#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace unident;

namespace {

LtiSystem small_system() {
  LtiSystem sys;
  sys.A = Matrix::Zero(4, 4);
  sys.A.diagonal() << 0.5, 0.4, 0.3, 0.2;
  sys.B = Matrix::Identity(4, 4);
  sys.C = Matrix::Identity(4, 4);
  sys.mask = first_row_mask(4);
  return sys;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no Error thrown";
  return ErrorCode::EvalError;
}

}  // namespace

TEST(SystemModel, FirstRowMaskTouchesOnlyFirstRowOfA) {
  const LtiSystem sys = small_system();
  Vector theta(4);
  theta << 1, 2, 3, 4;
  const LtiSystem out = apply_params(sys, theta);
  EXPECT_EQ(out.A.row(0), theta.transpose());
  EXPECT_EQ(out.A.bottomRows(3), sys.A.bottomRows(3));
  EXPECT_EQ(out.B, sys.B);
  EXPECT_EQ(out.C, sys.C);
}

TEST(SystemModel, ExtractApplyRoundTrip) {
  Rng rng(1);
  const LtiSystem sys = random_system(rng, 3, 2, 2, 0.7);
  const Vector theta = extract_params(sys);
  ASSERT_EQ(theta.size(), 9 + 6 + 6);
  const LtiSystem back = apply_params(sys, theta);
  EXPECT_EQ(back.A, sys.A);
  EXPECT_EQ(back.B, sys.B);
  EXPECT_EQ(back.C, sys.C);
  EXPECT_EQ(extract_params(apply_params(sys, 2.0 * theta)), 2.0 * theta);
}

TEST(SystemModel, FullMaskOrderIsABCRowMajor) {
  const auto mask = full_mask(2, 1, 3);
  ASSERT_EQ(mask.size(), 4u + 2u + 6u);
  EXPECT_EQ(mask[0], (ParamRef{Block::A, 0, 0}));
  EXPECT_EQ(mask[1], (ParamRef{Block::A, 0, 1}));
  EXPECT_EQ(mask[4], (ParamRef{Block::B, 0, 0}));
  EXPECT_EQ(mask[6], (ParamRef{Block::C, 0, 0}));
  EXPECT_EQ(mask[11], (ParamRef{Block::C, 2, 1}));
}

TEST(SystemModel, ValidationErrors) {
  LtiSystem sys = small_system();
  EXPECT_EQ(code_of([&] { apply_params(sys, Vector::Zero(3)); }), ErrorCode::ShapeError);
  LtiSystem bad = sys;
  bad.B = Matrix::Zero(3, 4);
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ShapeError);
  bad = sys;
  bad.mask.clear();
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ShapeError);
  bad = sys;
  bad.mask.push_back(bad.mask.front());
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ShapeError);
  bad = sys;
  bad.mask.push_back({Block::C, 9, 0});
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::ShapeError);
  bad = sys;
  bad.A(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::InvalidMatrix);
  EXPECT_EQ(code_of([&] { simulate(sys, Matrix::Zero(5, 3)); }), ErrorCode::ShapeError);
}

TEST(SystemModel, SimulationMatchesNaiveIteration) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    LtiSystem sys = random_system(rng, 4, 2, 3, 0.9);
    sys.x0 = normal_matrix(rng, 4, 1);
    const Matrix u = random_input(rng, 30, 2, 2);
    const auto traj = simulate(sys, u);
    EXPECT_LE((traj.y - oracle::naive_outputs(sys.A, sys.B, sys.C, u, sys.x0)).norm(),
              1e-12 * (1.0 + traj.y.norm()));
    EXPECT_EQ(traj.x.row(0), sys.x0.transpose());
  }
}

TEST(SystemModel, MarkovParametersMatchExplicitPowers) {
  Rng rng(3);
  const LtiSystem sys = random_system(rng, 5, 3, 2, 1.1);
  const auto markov = markov_params(sys, 12);
  for (int k = 0; k < 12; ++k) {
    const Matrix ref = oracle::naive_markov(sys.A, sys.B, sys.C, k);
    EXPECT_LE((markov[static_cast<std::size_t>(k)] - ref).norm(), 1e-12 * (1.0 + ref.norm()));
  }
}

TEST(SystemModel, ConvolutionReproducesZeroStateResponse) {
  Rng rng(4);
  const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
  const Matrix u = random_input(rng, 25, 2, 2);
  const Matrix y = simulate(sys, u).y;
  EXPECT_LE((convolve_markov(markov_params(sys, 25), u) - y).norm(), 1e-12 * y.norm());
}

TEST(SystemModel, NoiseIsSeededAndAdditive) {
  Rng rng(5);
  const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
  const Matrix u = random_input(rng, 40, 2, 2);
  const NoiseSpec noise{0.0, 0.2, 99};
  const auto a = simulate(sys, u, noise);
  const auto b = simulate(sys, u, noise);
  EXPECT_EQ(a.y, b.y);
  ASSERT_TRUE(a.noise_seed.has_value());
  EXPECT_EQ(*a.noise_seed, 99u);
  const Matrix clean = simulate(sys, u).y;
  EXPECT_GT((a.y - clean).norm(), 0.0);
  EXPECT_LE((a.y - clean).cwiseAbs().maxCoeff(), 0.2);
  // Output noise does not feed back into the state.
  EXPECT_EQ(a.x, simulate(sys, u).x);
  EXPECT_EQ(code_of([&] { simulate(sys, u, NoiseSpec{-1.0, 0.0, 0}); }),
            ErrorCode::ShapeError);
}

TEST(SystemModel, EvaluatorMatchesSimulate) {
  Rng rng(6);
  const LtiSystem sys = random_system(rng, 2, 2, 2, 0.5);
  const LtiEvaluator eval(sys);
  const Matrix u = random_input(rng, 10, 2, 2);
  const Vector theta = extract_params(sys) * 1.1;
  EXPECT_EQ(eval.evaluate(theta, u), simulate(apply_params(sys, theta), u).y);
  EXPECT_EQ(eval.num_params(), sys.num_params());
}
