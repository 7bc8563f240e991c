#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wngan/errors.hpp"
#include "wngan/lipschitz.hpp"

using namespace wngan;

namespace {

double input_grad_ratio(Module& layer, const Tensor& x, const Tensor& g) {
  Var xv = Var::parameter(x);
  backward(sum(mul(layer.forward(xv, Mode::Inference), Var::constant(g))));
  double num = 0.0, den = 0.0;
  const Tensor gx = xv.grad();
  for (double v : gx.data()) num += std::abs(v);
  for (double v : g.data()) den += std::abs(v);
  return num / den;
}

NetworkSpec tiny_wn_disc() { return build_mlp_gan(Variant::WN, 3, 6, 2).discriminator; }

}  // namespace

TEST(MakeCritic, StripsSigmoidAndMakesOutputStrict) {
  const NetworkSpec disc = tiny_wn_disc();
  ASSERT_EQ(disc.layers.back().kind, LayerKind::Sigmoid);
  const NetworkSpec critic = make_critic(disc);
  EXPECT_TRUE(critic.critic);
  EXPECT_EQ(critic.layers.size(), disc.layers.size() - 1);
  EXPECT_EQ(critic.layers.back().kind, LayerKind::StrictWNLinear);
  for (const auto& l : critic.layers) EXPECT_FALSE(is_affine_wn(l.kind));
}

TEST(MakeCritic, DcganCriticHasOnlyBoundedLayers) {
  const NetworkSpec critic = make_critic(build_dcgan(Variant::WN, 8, 4, 4, 2).discriminator);
  EXPECT_EQ(critic.layers.back().kind, LayerKind::StrictWNConv);
  EXPECT_NO_THROW(lipschitz_budget(critic));
}

TEST(MakeCritic, RejectsNonWnAndGenerators) {
  EXPECT_THROW(make_critic(build_mlp_gan(Variant::Vanilla, 3, 6, 2).discriminator), ConfigError);
  EXPECT_THROW(make_critic(build_mlp_gan(Variant::BN, 3, 6, 2).discriminator), ConfigError);
  EXPECT_THROW(make_critic(build_mlp_gan(Variant::WN, 3, 6, 2).generator), ConfigError);
}

TEST(Budget, ProductOfLayerFactors) {
  const NetworkSpec critic = make_critic(tiny_wn_disc());
  const LipschitzBudget b = lipschitz_budget(critic);
  ASSERT_EQ(b.factors.size(), critic.layers.size());
  double k = 1.0;
  for (const auto& [name, f] : b.factors) k *= f;
  EXPECT_DOUBLE_EQ(b.K, k);
  // strict 3 -> 6, TPReLU, strict 6 -> 1
  EXPECT_DOUBLE_EQ(b.K, std::sqrt(3.0) * std::sqrt(6.0));
}

TEST(Budget, ConvFactorIncludesStride) {
  const LayerDesc c{.kind = LayerKind::StrictWNConv, .in = 3, .out = 5, .kernel = 4, .stride = 2, .pad = 1};
  EXPECT_DOUBLE_EQ(layer_factor(c), std::sqrt(3.0 * 16.0) * 2.0);
  const LayerDesc t{.kind = LayerKind::StrictWNConvTranspose, .in = 2, .out = 7, .kernel = 3, .stride = 1};
  EXPECT_DOUBLE_EQ(layer_factor(t), std::sqrt(18.0));
}

TEST(Budget, UnboundedLayersRejected) {
  for (LayerKind k : {LayerKind::Linear, LayerKind::AffineWNLinear, LayerKind::Conv, LayerKind::BatchNorm,
                      LayerKind::Sigmoid}) {
    EXPECT_THROW(layer_factor({.kind = k, .in = 2, .out = 2, .kernel = 1}), ConfigError) << to_string(k);
  }
}

TEST(Budget, GrowsWithDepth) {
  double last = 0.0;
  for (std::size_t levels = 1; levels <= 3; ++levels) {
    std::vector<std::size_t> plan(levels, 4);
    const NetworkSpec critic = make_critic(build_resnet_gan(Variant::WN, plan, 4, 4u << levels, 1).discriminator);
    const double k = lipschitz_budget(critic).K;
    EXPECT_GT(k, last);
    last = k;
  }
}

TEST(GradientBound, AllOnesRowHitsSqrtN) {
  StrictWNLinear layer(9, 1);
  layer.weight.mutable_value() = Tensor::ones({1, 9});
  const double r = input_grad_ratio(layer, test::randn({1, 9}, 1, 1), Tensor::matrix({{0.7}}));
  EXPECT_LE(r, 3.0);
  EXPECT_NEAR(r, 3.0, 1e-6);
}

TEST(GradientBound, BasisRowHasRatioOne) {
  StrictWNLinear layer(5, 1);
  Tensor w({1, 5});
  w[0] = 1.0;
  layer.weight.mutable_value() = w;
  const double r = input_grad_ratio(layer, test::randn({1, 5}, 2, 1), Tensor::matrix({{-2.0}}));
  EXPECT_NEAR(r, 1.0, 1e-6);
  EXPECT_LE(r, 1.0);
}

TEST(GradientBound, TinyWeightsStayBounded) {
  StrictWNLinear layer(4, 3);
  layer.weight.mutable_value() = test::randn({3, 4}, 3, 1);
  for (double& v : layer.weight.mutable_value().data()) v *= 1e-6;
  const double r = input_grad_ratio(layer, test::randn({1, 4}, 4, 1), test::randn({1, 3}, 5, 1));
  EXPECT_LE(r, 2.0);
  EXPECT_LT(r, 1e-2);  // eps dominates the norm, so gradients shrink
}

TEST(GradientBound, TPReLUIsNonExpansive) {
  TPReLU act(3, true);
  CounterRng rng(1, 2);
  for (int t = 0; t < 100; ++t) {
    act.reset_parameters(rng);
    for (double& s : act.slope.mutable_value().data()) s = rng.uniform();
    const double r = input_grad_ratio(act, test::randn({1, 3, 2, 2}, t, 3), test::randn({1, 3, 2, 2}, t, 4));
    ASSERT_LE(r, 1.0 + kBoundSlack);
  }
}

TEST(GradientBound, NamedLayerSuitesPass) {
  for (const auto& name : bound_layer_names()) {
    const GradientBoundReport r = check_gradient_bound(name, 200, 7);
    EXPECT_TRUE(r.passed) << name << " max ratio/factor " << r.max_ratio;
    EXPECT_EQ(r.trials, 200u);
    EXPECT_EQ(r.violations, 0u);
  }
}

TEST(GradientBound, FixedFanInNine) {
  const GradientBoundReport r = check_gradient_bound("strict_wn_linear", 300, 2, 9);
  EXPECT_DOUBLE_EQ(r.factor, 3.0);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.max_ratio, 3.0 * (1.0 + kBoundSlack));
}

TEST(GradientBound, ResidualBlockAtItsInputShape) {
  const LayerDesc block{.kind = LayerKind::ResBlock,
                        .in = 2,
                        .out = 3,
                        .block = ResBlockSpec{2, 2, 3, Variant::WN, false, false}};
  const GradientBoundReport r = check_gradient_bound(block, {2, 4, 4}, 100, 3);
  EXPECT_TRUE(r.passed) << r.max_ratio << " vs " << r.factor;
}

TEST(GradientBound, UnknownLayerNameRejected) {
  EXPECT_THROW(check_gradient_bound("affine_wn_linear", 10, 1), ConfigError);
}

TEST(Probe, TinyCriticStaysWithinBudget) {
  Network critic(make_critic(tiny_wn_disc()), 3);
  const ProbeReport r = empirical_lipschitz(critic, 10000, 5);
  EXPECT_EQ(r.pairs, 10000u);
  EXPECT_TRUE(r.passed) << r.max_ratio << " > " << r.budget;
  EXPECT_GT(r.max_ratio, 0.0);
  EXPECT_DOUBLE_EQ(r.budget, lipschitz_budget(critic.spec()).K);
}

TEST(Probe, ConvCriticStaysWithinBudget) {
  Network critic(make_critic(build_dcgan(Variant::WN, 8, 4, 4, 2, 1).discriminator), 11);
  const ProbeReport r = empirical_lipschitz(critic, 2000, 1);
  EXPECT_TRUE(r.passed) << r.max_ratio << " > " << r.budget;
}

TEST(Probe, ConstantFunctionHasZeroRatio) {
  const ProbeReport r = empirical_lipschitz([](const Tensor& x) { return Tensor({x.dim(0)}); }, {4}, 500, 1.0, 1);
  EXPECT_EQ(r.max_ratio, 0.0);
  EXPECT_TRUE(r.passed);
}

// Negative control: the probe must catch a function steeper than its budget.
TEST(Probe, FlagsFunctionAboveBudget) {
  const BatchScalarFn f = [](const Tensor& x) {
    Tensor out({x.dim(0)});
    const std::size_t d = x.numel() / x.dim(0);
    for (std::size_t i = 0; i < x.dim(0); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += x[i * d + j];
      out[i] = 3.0 * s;  // Lipschitz constant 3*d in the inf-norm
    }
    return out;
  };
  const ProbeReport r = empirical_lipschitz(f, {2}, 1000, 5.0, 1);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_ratio, 5.0);
  EXPECT_LE(r.max_ratio, 6.0 + 1e-9);
}

TEST(Probe, ReportJsonKeys) {
  const ProbeReport r = empirical_lipschitz([](const Tensor& x) { return Tensor({x.dim(0)}); }, {1}, 10, 1.0, 1);
  const auto j = r.to_json();
  for (const char* k : {"pairs", "skipped", "max_ratio", "budget_K", "passed"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(LayerInputShapes, FollowTheNetwork) {
  Network net(make_critic(build_dcgan(Variant::WN, 8, 4, 4, 2, 1).discriminator), 1);
  const auto shapes = layer_input_shapes(net);
  ASSERT_EQ(shapes.size(), net.spec().layers.size());
  EXPECT_EQ(shapes.front(), (Shape{1, 8, 8}));
  EXPECT_EQ(shapes[1], (Shape{4, 4, 4}));
}
