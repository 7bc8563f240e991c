#include <gtest/gtest.h>

#include <cmath>

#include "wngan/equivalence.hpp"
#include "wngan/errors.hpp"

using namespace wngan;

TEST(Lemma, WorkedExampleForward) {
  const LemmaParams p{Tensor::vector({3, 4}), 10.0, 2.0, 1.0};
  const LemmaParams q = lemma_to_wn(p);
  EXPECT_EQ(q.w, Tensor::vector({3, 4}));
  EXPECT_DOUBLE_EQ(q.alpha, -2.0);
  EXPECT_DOUBLE_EQ(q.beta, 21.0);
  EXPECT_DOUBLE_EQ(q.gamma, 10.0);
}

TEST(Lemma, WorkedExampleInverse) {
  const LemmaParams q{Tensor::vector({3, 4}), -2.0, 10.0, 21.0};
  const LemmaParams p = lemma_to_vanilla(q);
  EXPECT_DOUBLE_EQ(p.alpha, 10.0);
  EXPECT_DOUBLE_EQ(p.gamma, 2.0);
  EXPECT_DOUBLE_EQ(p.beta, 1.0);
}

TEST(Lemma, SingleUnitFunctionsAgree) {
  CounterRng rng(5, 5);
  for (int t = 0; t < 200; ++t) {
    const LemmaParams p{rng.normal_tensor({3}), rng.normal(), rng.normal(), rng.normal()};
    const LemmaParams q = lemma_to_wn(p);
    double norm = 0.0;
    for (double v : q.w.data()) norm += v * v;
    norm = std::sqrt(norm);
    const Tensor x = rng.normal_tensor({3});
    const double pre = dot(p.w, x);
    const double vanilla = std::max(pre + p.alpha, 0.0) * p.gamma + p.beta;
    const double wn = std::max(dot(q.w, x) / norm, q.alpha) * q.gamma + q.beta;
    EXPECT_NEAR(vanilla, wn, 1e-12 * std::max(1.0, std::abs(vanilla)));
  }
}

TEST(Lemma, ZeroRowRejected) {
  EXPECT_THROW(lemma_to_wn({Tensor::zeros({2}), 1.0, 1.0, 0.0}), NumericError);
}

TEST(StackTransform, ThreeLayerOutputsAgree) {
  CounterRng rng(1, 1);
  const VanillaStack v = random_vanilla_stack(1, 4, 8, rng, false);
  const WNStack w = vanilla_to_wn(v);
  const Tensor x = rng.normal_tensor({1000, 4});
  EXPECT_LT(max_abs_diff(forward(v, x), forward(w, x)), 1e-9);
}

TEST(StackTransform, DeepStacksWithPReLUAgree) {
  for (std::size_t n : {1u, 2u, 3u}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      CounterRng rng(seed, n);
      const VanillaStack v = random_vanilla_stack(n, 1 + rng.below(16), 16, rng, true);
      const WNStack w = vanilla_to_wn(v);
      const Tensor x = rng.normal_tensor({1000, v.weights[0].dim(1)});
      EXPECT_LT(max_abs_diff(forward(v, x), forward(w, x)), 1e-9) << "n=" << n << " seed=" << seed;
    }
  }
}

TEST(StackTransform, RoundTripRecoversVanilla) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng rng(seed, 2);
    const VanillaStack v = random_vanilla_stack(3, 5, 16, rng, true);
    EXPECT_LT(max_param_diff(v, wn_to_vanilla(vanilla_to_wn(v))), 1e-12) << seed;
  }
}

TEST(StackTransform, InverseDirection) {
  CounterRng rng(3, 3);
  const WNStack w = vanilla_to_wn(random_vanilla_stack(2, 6, 12, rng, true));
  // Perturb the WN parameters so the starting point is a generic WN stack.
  WNStack w2 = w;
  for (auto& a : w2.alphas)
    for (auto& v : a.data()) v += rng.normal();
  for (auto& v : w2.beta.data()) v += rng.normal();
  const VanillaStack v = wn_to_vanilla(w2);
  const Tensor x = rng.normal_tensor({1000, 6});
  EXPECT_LT(max_abs_diff(forward(w2, x), forward(v, x)), 1e-9);
  EXPECT_LT(max_param_diff(w2, vanilla_to_wn(v)), 1e-12);
}

TEST(StackTransform, NegativeGammaNeedsNoFlip) {
  CounterRng rng(9, 9);
  VanillaStack v = random_vanilla_stack(1, 3, 4, rng, false);
  for (auto& x : v.weights.back().data()) x = -std::abs(x);
  const WNStack w = vanilla_to_wn(v);
  bool any_negative = false;
  for (double g : w.gamma.data()) any_negative = any_negative || g < 0.0;
  // The output gamma is a row norm here, so it stays positive; negative
  // gammas arise on the inverse side and round-trip as well.
  EXPECT_FALSE(any_negative);
  WNStack neg = w;
  for (auto& g : neg.gamma.data()) g = -g;
  const Tensor x = rng.normal_tensor({200, 3});
  EXPECT_LT(max_abs_diff(forward(neg, x), forward(wn_to_vanilla(neg), x)), 1e-9);
}

TEST(StackTransform, ZeroRowRejected) {
  CounterRng rng(4, 4);
  VanillaStack v = random_vanilla_stack(1, 3, 4, rng, false);
  for (std::size_t c = 0; c < v.weights[0].dim(1); ++c) v.weights[0].at({0, c}) = 0.0;
  EXPECT_THROW(vanilla_to_wn(v), NumericError);
}

TEST(EquivalenceCheck, ReportPasses) {
  const EquivalenceReport r = run_equivalence_check(2, 8, 1000, 1);
  EXPECT_TRUE(r.passed) << r.to_json().dump(2);
  EXPECT_LT(r.max_output_discrepancy, 1e-9);
  EXPECT_LT(r.max_roundtrip_error, 1e-12);
}
