#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "wngan/autodiff.hpp"
#include "wngan/errors.hpp"
#include "wngan/gradcheck.hpp"
#include "wngan/gradient_suite.hpp"

using namespace wngan;
using wngan::test::randn;

namespace {

// Direct nested-loop convolution, independent of the library's im2col-free path.
Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(wd)) continue;
                acc += x.at({b, ic, static_cast<std::size_t>(r), static_cast<std::size_t>(q)}) *
                       w.at({oc, ic, ki, kj});
              }
          y.at({b, oc, i, j}) = acc;
        }
  return y;
}

}  // namespace

TEST(Tensor, ShapeAndDataLengthAgree) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(shape_numel(t.shape()), t.numel());
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ZeroDimensionRejected) { EXPECT_THROW(Tensor({2, 0}), ShapeError); }

TEST(Ops, AddElementwise) {
  Var a = Var::constant(Tensor::vector({1, 2}));
  Var b = Var::constant(Tensor::vector({3, 4}));
  EXPECT_EQ(add(a, b).value(), Tensor::vector({4, 6}));
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  Var a = Var::constant(Tensor({2}));
  Var b = Var::constant(Tensor({3}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
  }
}

TEST(Ops, DivisionByZeroReported) {
  Var a = Var::constant(Tensor::vector({1, 2}));
  Var b = Var::constant(Tensor::vector({1, 0}));
  EXPECT_THROW(div(a, b), NumericError);
}

TEST(Ops, NonFiniteResultReported) {
  Var a = Var::constant(Tensor::vector({1e308, 1.0}));
  EXPECT_THROW(mul_scalar(a, 10.0), NumericError);
}

TEST(Ops, ScalarBroadcastOnly) {
  Var a = Var::constant(Tensor::vector({1, 2, 3}));
  Var s = Var::constant(Tensor::scalar(2.0));
  EXPECT_EQ(mul(a, s).value(), Tensor::vector({2, 4, 6}));
  EXPECT_THROW(mul(a, Var::constant(Tensor({1, 3}))), ShapeError);
}

TEST(Ops, MatmulIdentity) {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  const Tensor x = randn({3, 1}, 4);
  EXPECT_EQ(matmul(Var::constant(eye), Var::constant(x)).value(), x);
}

TEST(Ops, SigmoidStableForLargeInputs) {
  const Tensor y = sigmoid(Var::constant(Tensor::vector({-800, -40, 0, 40, 800}))).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 4.248354255291589e-18, 1e-30);
  EXPECT_EQ(y[2], 0.5);
  EXPECT_EQ(y[4], 1.0);
}

TEST(Ops, Conv2dMatchesNestedLoopOracle) {
  const Tensor x = randn({1, 1, 4, 4}, 1);
  const Tensor w = randn({1, 1, 4, 4}, 2);
  const Tensor y = conv2d(Var::constant(x), Var::constant(w), ConvGeometry::square(2, 1)).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_LT(max_abs_diff(y, naive_conv(x, w, 2, 1)), 1e-12);
}

TEST(Ops, Conv2dMultiChannelMatchesOracle) {
  const Tensor x = randn({2, 3, 5, 6}, 3);
  const Tensor w = randn({4, 3, 3, 3}, 4);
  const Tensor y = conv2d(Var::constant(x), Var::constant(w), ConvGeometry::square(1, 1)).value();
  EXPECT_LT(max_abs_diff(y, naive_conv(x, w, 1, 1)), 1e-12);
}

TEST(Ops, ConvOutputSizeErrorMentionsSize) {
  const Tensor x = randn({1, 1, 2, 2}, 1);
  const Tensor w = randn({1, 1, 5, 5}, 2);
  EXPECT_THROW(conv2d(Var::constant(x), Var::constant(w), ConvGeometry::square(1, 0)), ShapeError);
}

TEST(Ops, ConvAndTransposedConvAreAdjoint) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CounterRng rng(seed, 9);
    const std::size_t stride = 1 + rng.below(2), k = 2 + rng.below(3), pad = rng.below(2);
    const std::size_t h = 5 + rng.below(4);
    const Tensor x = rng.normal_tensor({2, 3, h, h});
    const Tensor w = rng.normal_tensor({4, 3, k, k});
    const ConvGeometry g = ConvGeometry::square(stride, pad);
    const Tensor cx = conv2d(Var::constant(x), Var::constant(w), g).value();
    const Tensor y = rng.normal_tensor(cx.shape());
    const Tensor ty = conv2d_transposed(Var::constant(y), Var::constant(w), g).value();
    // conv2d_transposed may produce a smaller map when the forward size
    // was floored; compare on the region it covers.
    double rhs = 0.0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < ty.dim(2); ++i)
          for (std::size_t j = 0; j < ty.dim(3); ++j) rhs += x.at({b, c, i, j}) * ty.at({b, c, i, j});
    if (ty.dim(2) != h) continue;
    const double lhs = dot(cx, y);
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::max(1.0, std::abs(lhs))) << "seed " << seed;
  }
}

TEST(Backward, SumGivesOnes) {
  Var x = Var::parameter(Tensor({5}, 0.3));
  backward(sum(x));
  EXPECT_EQ(x.grad(), Tensor::ones({5}));
}

TEST(Backward, SquareAtThree) {
  Var x = Var::parameter(Tensor::scalar(3.0));
  backward(mul(x, x));
  EXPECT_EQ(x.grad().item(), 6.0);
}

TEST(Backward, AccumulatesEveryUse) {
  Var x = Var::parameter(Tensor::scalar(2.0));
  backward(add(add(x, x), x));
  EXPECT_EQ(x.grad().item(), 3.0);
}

TEST(Backward, NonScalarRootRejected) {
  Var x = Var::parameter(Tensor({3}, 1.0));
  EXPECT_THROW(backward(mul_scalar(x, 2.0)), ShapeError);
}

TEST(Backward, SigmoidOfDotMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor w0 = randn({6}, seed, 1);
    const Tensor x0 = randn({6}, seed, 2);
    Var w = Var::parameter(w0);
    Var x = Var::constant(x0);
    backward(sigmoid(sum(mul(w, x))));
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& t) { return sigmoid(sum(mul(Var::constant(t), x))).value().item(); }, w0);
    const GradComparison cmp = compare_gradients(w.grad(), numeric, {1e-5, 1e-8, 1e-6});
    EXPECT_TRUE(cmp.passed) << "seed " << seed << " rel " << cmp.max_rel_error;
  }
}

TEST(FiniteDiff, SumOfSquares) {
  const Tensor g = finite_diff_grad([](const Tensor& t) { return t[0] * t[0] + t[1] * t[1]; }, Tensor::vector({1, 2}));
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantGivesZero) {
  const Tensor g = finite_diff_grad([](const Tensor&) { return 7.0; }, Tensor::vector({1, 2, 3}));
  EXPECT_EQ(g, Tensor::zeros({3}));
}

TEST(FiniteDiff, NonFiniteNamesCoordinate) {
  try {
    finite_diff_grad([](const Tensor& t) { return t[1] > 1.5 ? NAN : 0.0; }, Tensor::vector({0, 1.5, 0}));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}

TEST(FiniteDiff, RejectsNonPositiveStep) {
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return 0.0; }, Tensor::vector({1}), 0.0), ConfigError);
}

TEST(FiniteDiff, ReadoutFormAgreesWithScalarForm) {
  const Tensor x0 = randn({4}, 3);
  const Tensor w = randn({4}, 4);
  auto vec = [](const Tensor& t) { return sigmoid(mul(Var::constant(t), Var::constant(t))).value(); };
  auto scalar = [&](const Tensor& t) { return dot(vec(t), w); };
  EXPECT_LT(max_abs_diff(finite_diff_readout_grad(vec, w, x0), finite_diff_grad(scalar, x0)), 1e-8);
}

TEST(GradCheck, StrictWNLayerLossMatchesBackward) {
  const GradSuiteReport r = run_gradient_suite(20, 11, std::string("strict_wn_linear"));
  ASSERT_EQ(r.cases.size(), 1u);
  EXPECT_TRUE(r.passed) << r.to_json().dump(2);
}

// Every tensor op at 100 random points under the prescribed tolerance.
class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const GradSuiteReport r = run_gradient_suite(100, 1, GetParam());
  EXPECT_TRUE(r.passed) << r.to_json().dump(2);
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::ValuesIn([] {
                           std::vector<std::string> ops;
                           for (const auto& n : gradient_case_names())
                             if (n.rfind("op_", 0) == 0) ops.push_back(n);
                           return ops;
                         }()),
                         [](const ::testing::TestParamInfo<std::string>& info) { return info.param; });
