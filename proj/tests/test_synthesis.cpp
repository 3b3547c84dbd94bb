#include <gtest/gtest.h>

#include <cmath>

#include "dists/optim.hpp"
#include "dists/synthesis.hpp"
#include "kinks.hpp"
#include "oracles.hpp"

using dists::StageMask;
using dists::Tensor3;

namespace {

const std::array<int, 5> kNarrow = {4, 6, 8, 8, 8};

const dists::NetworkGraph<double>& net() {
  static const auto g = dists::random_graph<double>(5, kNarrow);
  return g;
}

const dists::NetworkGraph<float>& net_f() {
  static const auto g = dists::random_graph<float>(5, kNarrow);
  return g;
}

dists::StageMeans means_of(const Tensor3<double>& x) { return dists::stage_means(dists::extract_features(net(), x)); }

}  // namespace

TEST(StageMask, Parsing) {
  EXPECT_EQ(dists::parse_stage_mask("all"), StageMask("111111"));
  EXPECT_EQ(dists::parse_stage_mask("3"), StageMask("001000"));
  EXPECT_EQ(dists::parse_stage_mask("0-2"), StageMask("000111"));
  EXPECT_EQ(dists::parse_stage_mask("0,2,5"), StageMask("100101"));
  EXPECT_EQ(dists::parse_stage_mask("1-2,4"), StageMask("010110"));
  for (const char* bad : {"", "6", "-1", "3-1", "a", "1,,2"})
    EXPECT_THROW(dists::parse_stage_mask(bad), std::invalid_argument) << bad;
  EXPECT_EQ(dists::highest_stage(StageMask("000101")), 2);
}

TEST(TextureObjective, ZeroAtTheTarget) {
  const auto x = oracle::random_tensor(3, 16, 16, 1, 0, 1);
  Tensor3<double> grad;
  EXPECT_EQ(dists::texture_objective(net(), means_of(x), x, StageMask().set(), &grad), 0.0);
  for (double g : grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(TextureObjective, Stage0ClosedForm) {
  const auto x = oracle::random_tensor(3, 8, 8, 2, 0, 1);
  const auto y = oracle::random_tensor(3, 8, 8, 3, 0, 1);
  Tensor3<double> grad;
  const double v = dists::texture_objective(net(), means_of(x), y, StageMask("000001"), &grad);
  double expect = 0;
  for (int c = 0; c < 3; ++c) {
    double mx = 0, my = 0;
    for (double a : x.channel(c)) mx += a;
    for (double b : y.channel(c)) my += b;
    mx /= 64, my /= 64;
    expect += (mx - my) * (mx - my);
    for (double g : grad.channel(c)) EXPECT_NEAR(g, 2 * (my - mx) / 64, 1e-15);
  }
  EXPECT_NEAR(v, expect, 1e-15);
}

TEST(TextureObjective, Stage0IsPermutationInvariant) {
  auto x = oracle::random_tensor(3, 8, 8, 4, 0, 1);
  for (double& v : x.values()) v = std::round(v * 256) / 256;
  auto y = x;
  for (int c = 0; c < 3; ++c) std::reverse(y.channel(c).begin(), y.channel(c).end());
  const auto target = means_of(oracle::random_tensor(3, 8, 8, 5, 0, 1));
  EXPECT_EQ(dists::texture_objective(net(), target, x, StageMask("000001")),
            dists::texture_objective(net(), target, y, StageMask("000001")));
  EXPECT_NE(dists::texture_objective(net(), target, x, StageMask("001000")),
            dists::texture_objective(net(), target, y, StageMask("001000")));
}

TEST(TextureObjective, GradientMatchesFiniteDifferences) {
  const auto target = means_of(oracle::random_tensor(3, 32, 32, 6, 0, 1));
  const auto y = oracle::random_tensor(3, 32, 32, 7, 0, 1);
  for (const char* mask : {"all", "0", "2", "1-3", "5"}) {
    const auto m = dists::parse_stage_mask(mask);
    Tensor3<double> grad;
    dists::texture_objective(net(), target, y, m, &grad);
    const auto f = [&](const Tensor3<double>& t) { return dists::texture_objective(net(), target, t, m); };
    const auto check = oracle::check_gradient_smooth(f, y, grad, 100, 8, oracle::same_relu_pattern(net()));
    EXPECT_EQ(check.checked, 100) << mask;
    EXPECT_LT(check.skipped, 20) << mask;
    EXPECT_EQ(check.failed, 0) << mask << " worst " << check.worst;
  }
}

TEST(TextureObjective, Errors) {
  const auto x = oracle::random_tensor(3, 8, 8, 9, 0, 1);
  EXPECT_THROW(dists::texture_objective(net(), means_of(x), x, StageMask()), std::invalid_argument);
  const auto no0 = net().with_options({dists::PoolingKind::l2, false});
  EXPECT_THROW(dists::texture_objective(no0, means_of(x), x, StageMask("000001")), std::invalid_argument);
}

TEST(Synthesize, InitAtTheTextureReturnsIt) {
  const auto x = oracle::random_tensor<float>(3, 16, 16, 10, 0, 1);
  dists::SynthesisConfig cfg;
  cfg.init = dists::InitMode::image;
  const auto r = dists::synthesize(net_f(), x, cfg, &x);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.image, x);
}

TEST(Synthesize, ObjectiveDropsAndStage1MaskKeepsDeepStatisticsApart) {
  auto x = oracle::random_tensor<float>(3, 32, 32, 11, 0.2, 0.9);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) x(c, i, j) = 0.5f + 0.4f * std::sin(0.7f * (i + c) + 0.3f * j);
  dists::SynthesisConfig cfg;
  cfg.mask = dists::parse_stage_mask("1");
  cfg.descent.max_iters = 300;
  cfg.descent.step = 0.02;
  const auto r = dists::synthesize(net_f(), x, cfg);
  EXPECT_LT(r.trace.back(), 0.05 * r.trace.front());
  const auto fx = dists::stage_means(dists::extract_features(net_f(), x));
  const auto fy = dists::stage_means(dists::extract_features(net_f(), r.image));
  double deep = 0;
  for (int s = 3; s < 6; ++s)
    for (std::size_t c = 0; c < fx[s].size(); ++c) deep += (fx[s][c] - fy[s][c]) * (fx[s][c] - fy[s][c]);
  EXPECT_GT(deep, 1e-3 * r.trace.front());
}

TEST(Recover, InitAtReferenceConvergesImmediately) {
  const auto x = oracle::random_tensor<float>(3, 16, 16, 12, 0, 1);
  const auto w = dists::project_weights(dists::WeightSet::uniform(net_f().stage_channels()));
  const auto r = dists::recover(dists::dists_objective(net_f(), x, w), x, {});
  EXPECT_EQ(r.iterations, 1);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0], 0.0);
  EXPECT_EQ(r.image, x);
}

TEST(Recover, MseConvergesToTheReference) {
  const auto x = oracle::random_tensor<float>(3, 16, 16, 13, 0, 1);
  const auto y0 = oracle::random_tensor<float>(3, 16, 16, 14, 0, 1);
  dists::DescentConfig cfg;
  cfg.rule = dists::StepRule::gradient_descent;
  cfg.step = 0.25 * static_cast<double>(x.size());
  cfg.max_iters = 200;
  const auto r = dists::recover(dists::mse_objective(x), y0, cfg);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max<double>(worst, std::abs(r.image.values()[i] - x.values()[i]));
  EXPECT_LT(worst, 1e-3);
  for (double v : r.trace) EXPECT_TRUE(std::isfinite(v));
}

TEST(Recover, SsimObjectiveDecreases) {
  const auto x = oracle::random_tensor<float>(3, 24, 24, 15, 0, 1);
  const auto y0 = oracle::random_tensor<float>(3, 24, 24, 16, 0, 1);
  dists::DescentConfig cfg;
  cfg.max_iters = 100;
  const auto r = dists::recover(dists::ssim_objective(x), y0, cfg);
  EXPECT_LT(r.trace.back(), 0.5 * r.trace.front());
}

TEST(Recover, GradientDescentHalvesTheStepOnIncrease) {
  const auto x = oracle::random_tensor<float>(3, 8, 8, 17, 0, 1);
  dists::DescentConfig cfg;
  cfg.rule = dists::StepRule::gradient_descent;
  cfg.step = 4.0 * static_cast<double>(x.size());
  cfg.max_iters = 60;
  cfg.clamp_unit = false;
  const auto r = dists::recover(dists::mse_objective(x), Tensor3<float>(3, 8, 8, 0.5f), cfg);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1]);
  EXPECT_LT(r.trace.back(), 1e-6);
}

TEST(Recover, DivergenceReportsIterationAndLastStableIterate) {
  int calls = 0;
  dists::PixelObjective<float> f = [&](const Tensor3<float>& y, Tensor3<float>* g) {
    *g = Tensor3<float>(y.channels(), y.height(), y.width(), 1.0f);
    return ++calls < 4 ? 1.0 / calls : std::nan("");
  };
  Tensor3<float> last;
  dists::DescentConfig cfg;
  cfg.clamp_unit = false;
  try {
    dists::recover(f, Tensor3<float>(3, 4, 4, 0.5f), cfg, &last);
    FAIL() << "expected divergence";
  } catch (const dists::OptimizationError& e) {
    EXPECT_EQ(e.iteration, 3);
  }
  ASSERT_EQ(last.size(), 48u);
  for (float v : last.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Recover, BudgetMustBePositive) {
  dists::DescentConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(dists::recover(dists::mse_objective(Tensor3<float>(3, 4, 4)), Tensor3<float>(3, 4, 4), cfg),
               std::invalid_argument);
}
