#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace unident;

namespace {

LtiSystem s2_system(Rng& rng) {
  LtiSystem sys = random_system(rng, 4, 4, 4, 0.5);
  sys.mask = first_row_mask(4);
  return sys;
}

// Rank-drop test for column i, computed with elimination.
bool rank_drops(const Matrix& W, Eigen::Index i) {
  return oracle::elimination_rank(drop_column(W, i)) < oracle::elimination_rank(W);
}

}  // namespace

TEST(Identifiability, S2UnderFullRankInputIsFullyIdentifiable) {
  Rng rng(1);
  const LtiSystem sys = s2_system(rng);
  const auto rep = analyze(build_bundle_lti(sys, random_input(rng, 50, 4, 4)));
  EXPECT_EQ(rep.rank_F, 4);
  EXPECT_TRUE(rep.param_identifiable);
  EXPECT_TRUE(rep.dynamic_identifiable);
  for (const auto& v : rep.per_param) EXPECT_TRUE(v.identifiable);
  EXPECT_EQ(rep.null_basis.cols(), 0);
  EXPECT_FALSE(rep.witness.has_value());
}

TEST(Identifiability, FullMaskRankLossEqualsSimilarityDimension) {
  // T(theta) = T A T^-1 etc. leaves outputs unchanged: p^2 flat directions.
  Rng rng(2);
  for (Eigen::Index p : {2, 3}) {
    const LtiSystem sys = random_system(rng, p, 3, 3, 0.7);
    const auto rep = analyze(build_bundle_lti(sys, random_input(rng, 40, 3, 3)));
    EXPECT_EQ(rep.rank_F, sys.num_params() - p * p);
    EXPECT_FALSE(rep.param_identifiable);
    EXPECT_TRUE(rep.dynamic_identifiable);
  }
}

TEST(Identifiability, PerParameterVerdictsAgreeWithRankDrop) {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::Index l = 1 + static_cast<Eigen::Index>(rng() % 3);
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 3);
    LtiSystem sys = random_system(rng, p, l, m, 0.8);
    std::shuffle(sys.mask.begin(), sys.mask.end(), rng);
    sys.mask.resize(1 + rng() % sys.mask.size());
    const Eigen::Index T = 1 + static_cast<Eigen::Index>(rng() % 12);
    const int rank = 1 + static_cast<int>(rng() % l);
    const auto b = build_bundle_lti(sys, random_input(rng, T, l, rank));
    const auto rep = analyze(b);
    ASSERT_EQ(rep.per_param.size(), static_cast<std::size_t>(b.n));
    for (Eigen::Index i = 0; i < b.n; ++i) {
      const bool span = param_identifiable(b, i);
      EXPECT_EQ(rep.per_param[static_cast<std::size_t>(i)].identifiable, span);
      EXPECT_EQ(span, rank_drops(b.W, i)) << "trial " << trial << " i " << i;
    }
    EXPECT_EQ(rep.param_identifiable, oracle::elimination_rank(b.W) == b.n);
  }
}

TEST(Identifiability, ParameterInvisibleToOutputIsUnidentifiable) {
  // C = 0 except the first row; B entries feeding state 1 never reach y
  // when A is diagonal and C(0, 1) = 0.
  LtiSystem sys;
  sys.A = Matrix::Zero(2, 2);
  sys.A.diagonal() << 0.5, 0.3;
  sys.B = Matrix::Identity(2, 2);
  sys.C = Matrix::Zero(1, 2);
  sys.C(0, 0) = 1.0;
  sys.mask = {{Block::B, 0, 0}, {Block::B, 1, 1}};
  Rng rng(4);
  const auto rep = analyze(build_bundle_lti(sys, random_input(rng, 20, 2, 2)));
  EXPECT_TRUE(rep.per_param[0].identifiable);
  EXPECT_FALSE(rep.per_param[1].identifiable);
  EXPECT_EQ(rep.rank_F, 1);
}

TEST(Identifiability, RankDeficientInputYieldsWitness) {
  Rng rng(5);
  const LtiSystem sys = random_system(rng, 3, 3, 3, 0.7);
  const auto b = build_bundle_lti(sys, random_input(rng, 30, 3, 2));
  const auto rep = analyze(b);
  EXPECT_FALSE(rep.dynamic_identifiable);
  ASSERT_TRUE(rep.witness.has_value());
  const Vector& v = *rep.witness;
  EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_LE((b.W * v).norm(), 1e-7 * b.W.norm());
  EXPECT_GE((b.H * v).norm(), 1e-4 * b.H.norm());
  EXPECT_NEAR(rep.residual_Wv, (b.W * v).norm(), 1e-15);
}

TEST(Identifiability, ZeroInputIsNothingIdentifiable) {
  Rng rng(6);
  const LtiSystem sys = random_system(rng, 2, 2, 2, 0.7);
  const auto rep = analyze(build_bundle_lti(sys, Matrix::Zero(10, 2)));
  EXPECT_EQ(rep.rank_F, 0);
  EXPECT_EQ(rep.null_basis.cols(), sys.num_params());
  for (const auto& v : rep.per_param) EXPECT_FALSE(v.identifiable);
}

TEST(Identifiability, ReparameterizationSeparatesRangeAndNullSpace) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
    const auto b = build_bundle_lti(sys, random_input(rng, 25, 2, 1 + trial % 2));
    const auto rep = analyze(b);
    const auto rp = reparameterize(b);
    const Eigen::Index n = b.n;
    EXPECT_EQ(rp.r, rep.rank_F);
    EXPECT_EQ(oracle::elimination_rank(rp.P), n);
    EXPECT_LE((rp.P.transpose() * rp.P - Matrix::Identity(n, n)).norm(), 1e-10);
    const Matrix trailing = rp.P.rightCols(n - rp.r);
    EXPECT_LE((b.F * trailing).norm(), 1e-7 * b.F.norm());
    EXPECT_LE((b.W * trailing).norm(), 1e-7 * b.W.norm());
    EXPECT_EQ(svd_rank(b.W * rp.P.leftCols(rp.r)), rep.rank_F);
  }
}

TEST(Identifiability, ShortHorizonForcesRankDeficiency) {
  Rng rng(8);
  const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
  const auto rep = analyze(build_bundle_lti(sys, random_input(rng, 3, 2, 2)));
  EXPECT_LE(rep.rank_F, 3 * 2);
  EXPECT_FALSE(rep.param_identifiable);
}

TEST(Identifiability, RankConstancyProbe) {
  Rng rng(9);
  const LtiSystem sys = random_system(rng, 3, 2, 2, 0.8);
  const Matrix u = random_input(rng, 20, 2, 2);
  EXPECT_TRUE(rank_constancy_probe(sys, u, {1e-4, 4, 1}));
  // At A = 0, B = 0 the rank is degenerate and jumps under perturbation.
  LtiSystem degenerate = sys;
  degenerate.A.setZero();
  degenerate.B.setZero();
  EXPECT_FALSE(rank_constancy_probe(degenerate, u, {1e-4, 4, 1}));
  EXPECT_THROW(rank_constancy_probe(sys, u, {0.0, 4, 1}), Error);
}

TEST(Identifiability, BadParameterIndexIsRejected) {
  Rng rng(10);
  const auto b = build_bundle_lti(random_system(rng, 2, 1, 1, 0.5), random_input(rng, 5, 1, 1));
  EXPECT_THROW(param_identifiable(b, b.n), Error);
  EXPECT_THROW(param_identifiable(b, -1), Error);
}
