#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "deferral/losses.hpp"
#include "deferral/rng.hpp"
#include "support/reference.hpp"

namespace deferral::losses {
namespace {

using V = std::vector<double>;

const PsiSpec kMae{1.0};
const PsiSpec kLog{0.0};

V RandomScores(rng::Stream& rs, int width, double scale = 3.0) {
  V s(width);
  for (double& v : s) v = scale * rs.Normal();
  return s;
}

V RandomCosts(rng::Stream& rs, int ne) {
  V c(ne);
  for (double& v : c) v = rs.Uniform();
  return c;
}

TEST(Softmax, Examples) {
  const V u = Softmax(V{0, 0, 0});
  for (double p : u) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);

  const V big = Softmax(V{1000, 0, 0});
  EXPECT_NEAR(big[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(big[1]));
  EXPECT_NEAR(big[1], 0.0, 1e-300);

  const V two = Softmax(V{1, 2});
  EXPECT_NEAR(two[0], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(two[1], std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(two[0], 0.26894, 1e-5);
}

TEST(Softmax, RejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(Softmax(V{0, nan}), Error);
  EXPECT_THROW(Softmax(V{inf, 0}), Error);
  try {
    Softmax(V{nan});
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid scores");
  }
}

TEST(Argmax, LowestIndexOnTies) {
  EXPECT_EQ(Argmax(V{1, 3, 3, 2}), 1);
  EXPECT_EQ(Argmax(V{0, 0}), 0);
}

TEST(DeferralLoss, Examples) {
  const ProblemShape s32(3, 2);
  EXPECT_EQ(DeferralLoss(V{0, 5, 0, 1, 1}, 1, V{0.2, 0.3}, s32), 0.0);
  EXPECT_EQ(DeferralLoss(V{0, 0, 0, 5, 1}, 1, V{0.4, 0.9}, s32), 0.4);
  const ProblemShape s22(2, 2);
  EXPECT_EQ(DeferralLoss(V{0, 3, 1, 1}, 0, V{0.5, 0.5}, s22), 1.0);
}

TEST(DeferralLoss, RejectsBadInput) {
  const ProblemShape s(2, 1);
  EXPECT_THROW(DeferralLoss(V{0, 0, 0}, 2, V{0.5}, s), Error);
  EXPECT_THROW(DeferralLoss(V{0, 0, 0}, -1, V{0.5}, s), Error);
  EXPECT_THROW(DeferralLoss(V{0, 0}, 0, V{0.5}, s), Error);
  EXPECT_THROW(DeferralLoss(V{0, 0, 0}, 0, V{1.5}, s), Error);
}

TEST(DeferralLossAlt, Examples) {
  const ProblemShape s22(2, 2);
  // Defers to the second expert, whose cost is 0.
  EXPECT_EQ(DeferralLossAlt(V{0, 0, 0, 4}, 0, V{1, 0}, s22), 0.0);
  EXPECT_EQ(DeferralLoss(V{0, 0, 0, 4}, 0, V{1, 0}, s22), 0.0);
  EXPECT_EQ(DeferralLossAlt(V{3, 0, 0, 0}, 0, V{0.3, 0.8}, s22), 0.0);
}

TEST(DeferralLossAlt, MatchesDefinitionOnRandomInputs) {
  rng::Stream rs(11);
  for (int i = 0; i < 20000; ++i) {
    const int n = rs.Between(2, 10);
    const int ne = rs.Between(1, 5);
    const ProblemShape shape(n, ne);
    // Integer scores make ties common.
    V scores(n + ne);
    for (double& v : scores) v = static_cast<double>(rs.Between(0, 3));
    const int y = rs.Between(0, n - 1);
    const V costs = RandomCosts(rs, ne);
    const double a = DeferralLoss(scores, y, costs, shape);
    EXPECT_NEAR(DeferralLossAlt(scores, y, costs, shape), a, 1e-12);
    EXPECT_EQ(a, ref::DeferralLoss(scores, y, costs, n));
  }
}

TEST(TwoStageDeferralLoss, Examples) {
  EXPECT_EQ(TwoStageDeferralLoss(V{2, 1}, V{0.3, 0.7}), 0.3);
  EXPECT_EQ(TwoStageDeferralLoss(V{0, 0}, V{0.3, 0.7}), 0.3);
  EXPECT_EQ(TwoStageDeferralLoss(V{-1, 4, 2}, V{1, 0, 0.5}), 0.0);
  EXPECT_THROW(TwoStageDeferralLoss(V{0, 0, 0}, V{0.3, 0.7}), Error);
}

TEST(SurrogateSingle, Examples) {
  const ProblemShape s21(2, 1);
  EXPECT_NEAR(SurrogateSingle(V{0, 0, 0}, 0, V{1}, s21, kMae), 2.0 / 3.0,
              1e-15);
  EXPECT_NEAR(SurrogateSingle(V{0, 0, 0}, 0, V{0}, s21, kMae), 1.0 / 3.0,
              1e-15);
  const ProblemShape s32(3, 2);
  EXPECT_NEAR(SurrogateSingle(V{0, 60, 0, 0, 0}, 1, V{0.3, 0.9}, s32, kMae),
              0.0, 1e-15);
}

TEST(SurrogateSingle, NegativeFirstCoefficientIsKept) {
  // sum c + 1 - n_e = -1 with both costs 0.
  const ProblemShape s22(2, 2);
  const V uniform{0, 0, 0, 0};
  const double expected = -1.0 * 0.75 + 2.0 * 0.5;
  EXPECT_NEAR(SurrogateSingle(uniform, 0, V{0, 0}, s22, kMae), expected,
              1e-15);
}

TEST(SurrogateSingle, RejectsInvalidPsi) {
  const ProblemShape s21(2, 1);
  EXPECT_THROW(SurrogateSingle(V{0, 0, 0}, 0, V{1}, s21, PsiSpec{1.5}), Error);
  EXPECT_THROW(SurrogateSingle(V{0, 0, 0}, 0, V{1}, s21, PsiSpec{-0.1}), Error);
  EXPECT_THROW(
      SurrogateSingle(V{0, 0, 0}, 0, V{1}, s21, PsiSpec{0.0, 1e-3}), Error);
}

TEST(SurrogateSingle, FiniteForExtremeScoresWhenQPositive) {
  const ProblemShape s22(2, 2);
  for (double q : {0.25, 0.7, 1.0}) {
    const double v =
        SurrogateSingle(V{-800, 900, -50, 0}, 0, V{0.2, 0.6}, s22, PsiSpec{q});
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(SurrogateSingle, VanishesUnderScalingWhenRealizable) {
  const ProblemShape s32(3, 2);
  const V predict_y{0.1, 1.0, 0.2, 0.4, -0.3};
  // Deferring to expert 0 with c_0 = 0 and the other cost equal to 1.
  const V defer{0.1, 0.3, 0.2, 1.0, -0.3};
  for (double q : {0.3, 0.7, 1.0}) {
    V a = predict_y;
    V b = defer;
    for (double& v : a) v *= 1e3;
    for (double& v : b) v *= 1e3;
    EXPECT_LE(SurrogateSingle(a, 1, V{0.5, 0.5}, s32, PsiSpec{q}), 1e-6);
    EXPECT_LE(SurrogateSingle(b, 2, V{0.0, 1.0}, s32, PsiSpec{q}), 1e-6);
  }
}

TEST(SurrogateMae, IsBitIdenticalAlias) {
  const ProblemShape s21(2, 1);
  EXPECT_NEAR(SurrogateMae(V{0, 0, 0}, 0, V{1}, s21), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(SurrogateMae(V{0, 0, 0}, 0, V{0}, s21), 1.0 / 3.0, 1e-15);
  rng::Stream rs(5);
  for (int i = 0; i < 2000; ++i) {
    const int n = rs.Between(2, 6);
    const int ne = rs.Between(1, 4);
    const ProblemShape shape(n, ne);
    const V scores = RandomScores(rs, n + ne);
    const V costs = RandomCosts(rs, ne);
    const int y = rs.Between(0, n - 1);
    EXPECT_EQ(SurrogateMae(scores, y, costs, shape),
              SurrogateSingle(scores, y, costs, shape, kMae));
  }
}

TEST(BaselineVerma, Examples) {
  const ProblemShape s22(2, 2);
  const V scores{0.3, -1.0, 2.0, 0.5};
  const V s = Softmax(scores);
  EXPECT_NEAR(BaselineVerma(scores, 1, V{1, 1}, s22), -std::log(s[1]), 1e-14);

  const ProblemShape s21(2, 1);
  EXPECT_NEAR(BaselineVerma(V{0, 0, 0}, 0, V{0}, s21), -2.0 * std::log(1.0 / 3),
              1e-14);
  EXPECT_NEAR(BaselineVerma(V{0, 0, 0}, 0, V{0}, s21), 2.1972, 1e-4);
  EXPECT_NEAR(BaselineVerma(V{80, 0, 0, 0}, 0, V{1, 1}, s22), 0.0, 1e-15);
}

TEST(BaselineVerma, ClampsVanishingProbabilities) {
  const ProblemShape s21(2, 1);
  const double v = BaselineVerma(V{0, 0, -5000}, 0, V{0}, s21);
  EXPECT_NEAR(v, std::log(2.0) - std::log(1e-12), 1e-9);
}

TEST(BaselineMao, Examples) {
  const ProblemShape s21(2, 1);
  EXPECT_NEAR(BaselineMao(V{0, 0, 0}, 0, V{0}, s21, kMae), 4.0 / 3.0, 1e-15);
  const ProblemShape s32(3, 2);
  EXPECT_NEAR(BaselineMao(V{0, 90, 0, 0, 0}, 1, V{1, 1}, s32, kMae), 0.0,
              1e-15);
  EXPECT_THROW(BaselineMao(V{0, 0, 0}, 0, V{0}, s21, PsiSpec{2.0}), Error);
}

TEST(BaselineMao, ReducesToVermaAtQZero) {
  rng::Stream rs(17);
  for (int i = 0; i < 2000; ++i) {
    const int n = rs.Between(2, 6);
    const int ne = rs.Between(1, 4);
    const ProblemShape shape(n, ne);
    const V scores = RandomScores(rs, n + ne, 10.0);
    const V costs = RandomCosts(rs, ne);
    const int y = rs.Between(0, n - 1);
    EXPECT_NEAR(BaselineMao(scores, y, costs, shape, kLog),
                BaselineVerma(scores, y, costs, shape), 1e-12);
  }
}

TEST(TwoStagePhi, Examples) {
  EXPECT_NEAR(TwoStageSurrogatePhi(V{0.7, 0.7}, V{1, 0}, {PhiKind::kLogistic}),
              std::log(2.0), 1e-15);
  for (PhiKind k : {PhiKind::kLogistic, PhiKind::kExponential, PhiKind::kHinge}) {
    EXPECT_EQ(TwoStageSurrogatePhi(V{3, -2}, V{0, 0}, {k}), 0.0);
  }
  EXPECT_NEAR(TwoStageSurrogatePhi(V{2, 0}, V{1, 1}, {PhiKind::kHinge}), 3.0,
              1e-15);
  EXPECT_THROW(TwoStageSurrogatePhi(V{0, 0, 0}, V{1, 1, 1}, {}), Error);
}

TEST(TwoStagePsi, Examples) {
  EXPECT_NEAR(TwoStageSurrogatePsi(V{0.2, 0.2}, V{1, 0}, kLog), std::log(2.0),
              1e-15);
  EXPECT_NEAR(TwoStageSurrogatePsi(V{0, 0, 0}, V{1, 1, 1}, kMae), 2.0, 1e-15);
  for (const PsiSpec& psi : {kLog, kMae}) {
    EXPECT_NEAR(TwoStageSurrogatePsi(V{-1, 70, 2}, V{1, 0, 1}, psi), 0.0,
                1e-15);
  }
  EXPECT_THROW(TwoStageSurrogatePsi(V{0, 0}, V{1, 0}, PsiSpec{-1}), Error);
}

TEST(TwoStagePsi, MatchesLogisticPhiForTwoExperts) {
  rng::Stream rs(23);
  for (int i = 0; i < 2000; ++i) {
    const V scores = RandomScores(rs, 2, 5.0);
    const V costs = RandomCosts(rs, 2);
    EXPECT_NEAR(TwoStageSurrogatePsi(scores, costs, kLog),
                TwoStageSurrogatePhi(scores, costs, {PhiKind::kLogistic}),
                1e-12);
  }
}

struct GradCase {
  const char* name;
  LossSpec loss;
  bool two_stage;
};

class GradientTest : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientTest, MatchesCentralDifferences) {
  const GradCase& c = GetParam();
  rng::Stream rs = rng::Stream(31).Derive(c.name);
  for (int i = 0; i < 100; ++i) {
    const int n = rs.Between(2, 5);
    const bool phi = c.loss.kind == LossKind::kTwoStagePhi;
    const int ne = phi ? 2 : rs.Between(c.two_stage ? 2 : 1, 4);
    const ProblemShape shape(c.two_stage ? ne : n, ne);
    const int width = c.two_stage ? ne : n + ne;
    const V scores = RandomScores(rs, width, 2.0);
    const V costs = RandomCosts(rs, ne);
    const int y = rs.Between(0, shape.n() - 1);
    const V g = Gradient(c.loss, scores, y, costs, shape);
    const V fd = ref::CentralDifference(
        [&](const V& s) { return Evaluate(c.loss, s, y, costs, shape); },
        scores, 1e-5);
    EXPECT_LE(ref::RelativeError(g, fd), 1e-5) << c.name << " case " << i;

    V fused(width);
    const double value =
        ValueAndGradient(c.loss, scores, y, costs, shape, fused);
    EXPECT_NEAR(value, Evaluate(c.loss, scores, y, costs, shape), 1e-12);
    for (int a = 0; a < width; ++a) EXPECT_NEAR(fused[a], g[a], 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllSurrogates, GradientTest,
    ::testing::Values(
        GradCase{"single_q0", LossSpec::Make(LossKind::kSurrogateSingle, 0.0),
                 false},
        GradCase{"single_q07", LossSpec::Make(LossKind::kSurrogateSingle, 0.7),
                 false},
        GradCase{"mae", LossSpec::Make(LossKind::kSurrogateMae), false},
        GradCase{"verma", LossSpec::Make(LossKind::kBaselineVerma), false},
        GradCase{"mao_q05", LossSpec::Make(LossKind::kBaselineMao, 0.5), false},
        GradCase{"phi_logistic", LossSpec::Make(LossKind::kTwoStagePhi), true},
        GradCase{"phi_exponential",
                 LossSpec::Make(LossKind::kTwoStagePhi, 1.0,
                                PhiKind::kExponential),
                 true},
        GradCase{"psi_q0", LossSpec::Make(LossKind::kTwoStagePsi, 0.0), true},
        GradCase{"psi_q05", LossSpec::Make(LossKind::kTwoStagePsi, 0.5), true},
        GradCase{"psi_q1", LossSpec::Make(LossKind::kTwoStagePsi, 1.0), true}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(SurrogateSingleGrad, SymmetricCoordinatesAgree) {
  const ProblemShape shape(3, 3);
  const V g = SurrogateSingleGrad(V(6, 0.0), 0, V{0.4, 0.4, 0.4}, shape,
                                  PsiSpec{0.5});
  EXPECT_NEAR(g[1], g[2], 1e-15);
  EXPECT_NEAR(g[3], g[4], 1e-15);
  EXPECT_NEAR(g[4], g[5], 1e-15);
}

TEST(SurrogateSingleGrad, VanishesAtSaturation) {
  const ProblemShape shape(3, 1);
  // All costs 1: only the Psi(s_y) term remains.
  const V scores{40, 0, 0, 0};
  const V g = SurrogateSingleGrad(scores, 0, V{1}, shape, kMae);
  for (double v : g) EXPECT_LE(std::abs(v), 1e-15);
  const V fd = ref::CentralDifference(
      [&](const V& s) { return SurrogateSingle(s, 0, V{1}, shape, kMae); },
      scores, 1e-5);
  for (double v : fd) EXPECT_LE(std::abs(v), 1e-12);
}

TEST(Gradient, RejectsTargetLosses) {
  const ProblemShape shape(2, 1);
  EXPECT_THROW(Gradient(LossSpec::Make(LossKind::kDeferral), V{0, 0, 0}, 0,
                        V{1}, shape),
               Error);
}

TEST(LossSpec, NamesRoundTrip) {
  for (const char* name :
       {"deferral", "two_stage_deferral", "surrogate_single", "surrogate_mae",
        "baseline_verma", "baseline_mao", "two_stage_phi", "two_stage_psi"}) {
    EXPECT_EQ(LossSpec::FromName(name, 0.5).name(), name);
  }
  EXPECT_THROW(LossSpec::FromName("cross_entropy"), Error);
  EXPECT_EQ(LossSpec::FromName("two_stage_psi").stage(), Stage::kTwo);
  EXPECT_TRUE(LossSpec::FromName("deferral").is_target());
}

}  // namespace
}  // namespace deferral::losses
