#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "test_util.hpp"
#include "wngan/dataset.hpp"
#include "wngan/errors.hpp"
#include "wngan/evaluation.hpp"
#include "wngan/training.hpp"

using namespace wngan;

namespace {

const GeneratorFn kIdentity = [](const Var& z) { return z; };

/// Flattened synthetic-shapes images: values are 0 or at least 0.25.
Tensor shape_targets(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 7);
  std::vector<double> data;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor img = sample_shape_8x8(rng);
    data.insert(data.end(), img.data().begin(), img.data().end());
  }
  return Tensor({n, 192}, std::move(data));
}

Network small_generator(std::uint64_t seed) {
  TrainConfig c;
  c.latent_dim = 3;
  c.hidden = 8;
  return Network(specs_for(c, Variant::WN, Shape{2}).generator, seed);
}

}  // namespace

TEST(Reconstruct, IdentityGeneratorRecoversShapeTargets) {
  const Tensor x = shape_targets(8, 3);
  const ReconstructResult r = reconstruct(kIdentity, 192, x, {.steps = 2000, .lr = 0.01});
  for (double l : r.per_sample) EXPECT_LT(l, 1e-6);
  for (std::size_t i = 0; i < x.numel(); ++i) ASSERT_NEAR(r.z[i], x[i], 1e-3) << "coordinate " << i;
}

// Targets in roughly (0, 0.1) never settle: once the gradient is small the
// RMSProp denominator shrinks with it, so z keeps stepping by about lr and
// oscillates around the target. This pins the behaviour down.
TEST(Reconstruct, SmallTargetsSettleIntoLimitCycle) {
  const Tensor x = Tensor::matrix({{0.003}});
  const ReconstructResult r = reconstruct(kIdentity, 1, x, {.steps = 2000, .lr = 0.01, .record_curve = true});
  double tail_max = 0.0;
  for (std::size_t s = 1900; s < r.curve.size(); ++s) tail_max = std::max(tail_max, r.curve[s]);
  EXPECT_GT(tail_max, 1e-6);
  EXPECT_LT(tail_max, 1e-4);
}

TEST(Reconstruct, SingleStepIsMonotone) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Tensor x = test::randn({4, 6}, seed, 1);
    const ReconstructResult r = reconstruct(kIdentity, 6, x, {.steps = 1, .record_curve = true});
    ASSERT_EQ(r.curve.size(), 2u);
    EXPECT_LE(r.curve[1], r.curve[0]);
    // From z = 0 the gradient is g = -2x and s = 0.1 g^2, so one step moves
    // each coordinate by lr * 2x / (sqrt(0.1) * 2|x| + eps).
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double expect = 0.01 * 2.0 * x[i] / (std::sqrt(0.1) * 2.0 * std::abs(x[i]) + 1e-6);
      EXPECT_NEAR(r.z[i], expect, 1e-15);
    }
  }
}

TEST(Reconstruct, FirstPointIsGeneratorAtZero) {
  Network gen = small_generator(5);
  const Tensor x = test::randn({3, 2}, 9, 1);
  const ReconstructResult r = reconstruct(generator_fn(gen), 3, x, {.steps = 1, .record_curve = true});
  const Tensor g0 = gen.forward(Var::constant(Tensor({3, 3})), Mode::Inference).value();
  double expect = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) expect += (g0[i] - x[i]) * (g0[i] - x[i]);
  EXPECT_DOUBLE_EQ(r.curve[0], expect / static_cast<double>(x.numel()));
}

TEST(Reconstruct, PerPixelNormalizationUnderTiling) {
  const Tensor x = Tensor::matrix({{0.5, -0.25, 1.0}});
  const Tensor tiled = Tensor::matrix({{0.5, -0.25, 1.0, 0.5, -0.25, 1.0}});
  const GeneratorFn g1 = [](const Var& z) { return mul_scalar(z, 0.5); };
  const GeneratorFn g2 = [](const Var& z) {
    const Var half = mul_scalar(z, 0.5);
    return matmul(half, Var::constant(Tensor::matrix({{1, 0, 0, 1, 0, 0}, {0, 1, 0, 0, 1, 0}, {0, 0, 1, 0, 0, 1}})));
  };
  // RMSProp without eps is invariant to the gradient's scale, so the tiled
  // problem follows the same trajectory and only the normalization differs.
  const EvalConfig cfg{.steps = 30, .rmsprop_eps = 0.0};
  const ReconstructResult a = reconstruct(g1, 3, x, cfg);
  const ReconstructResult b = reconstruct(g2, 3, tiled, cfg);
  EXPECT_NEAR(a.per_sample[0], b.per_sample[0], 1e-14);
}

TEST(Reconstruct, ShapeMismatchRejected) {
  EXPECT_THROW(reconstruct(kIdentity, 4, Tensor({2, 3}), {}), ShapeError);
}

TEST(Reconstruct, ZeroStepsRejected) {
  EXPECT_THROW(reconstruct(kIdentity, 3, Tensor({2, 3}), {.steps = 0}), ConfigError);
}

TEST(Reconstruct, NonFiniteLossNamesStep) {
  try {
    reconstruct(kIdentity, 2, Tensor::matrix({{1e200, 0}}), {});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Reconstruct, LeavesGeneratorUntouched) {
  Network gen = small_generator(2);
  std::vector<Tensor> before;
  for (const auto& p : gen.parameters()) before.push_back(p.var.value());
  evaluate(gen, test::randn({4, 2}, 1, 1), {0, 1, 2, 3}, {.steps = 20}, "running");
  const auto after = gen.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(after[i].var.value(), before[i]);
    EXPECT_TRUE(after[i].var.requires_grad());
  }
}

TEST(Evaluate, ChunkingDoesNotChangeLosses) {
  Network gen = small_generator(4);
  const Tensor x = test::randn({7, 2}, 3, 1);
  const std::vector<std::size_t> idx{10, 11, 12, 13, 14, 15, 16};
  const EvalReport whole = evaluate(gen, x, idx, {.steps = 25}, "running");
  const EvalReport chunked = evaluate(gen, x, idx, {.steps = 25, .chunk_size = 3}, "running");
  EXPECT_EQ(whole.per_sample_loss, chunked.per_sample_loss);
  EXPECT_EQ(whole.sample_indices, idx);
}

TEST(Evaluate, DeterministicReport) {
  Network a = small_generator(8);
  Network b = small_generator(8);
  const Tensor x = test::randn({5, 2}, 1, 2);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const EvalReport ra = running_eval(a, x, idx);
  const EvalReport rb = running_eval(b, x, idx);
  EXPECT_EQ(ra.per_sample_loss, rb.per_sample_loss);
  EXPECT_EQ(ra.mean_loss, rb.mean_loss);
  EXPECT_EQ(ra.steps, 50u);
}

TEST(Evaluate, MeanIsArithmeticMeanAndLossesNonNegative) {
  Network gen = small_generator(3);
  const Tensor x = test::randn({9, 2}, 2, 2);
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), 0);
  const EvalReport r = running_eval(gen, x, idx, {.steps = 10});
  ASSERT_EQ(r.per_sample_loss.size(), 9u);
  double s = 0.0;
  for (double l : r.per_sample_loss) {
    EXPECT_GE(l, 0.0);
    s += l;
  }
  EXPECT_DOUBLE_EQ(r.mean_loss, s / 9.0);
}

TEST(Evaluate, FailedSampleIsSkippedAndFlagged) {
  Network gen = small_generator(3);
  Tensor x = test::randn({4, 2}, 5, 1);
  x[2 * 2] = 1e200;
  const EvalReport r = running_eval(gen, x, {20, 21, 22, 23}, {.steps = 5});
  EXPECT_EQ(r.skipped, std::vector<std::size_t>{22});
  EXPECT_EQ(r.sample_indices, (std::vector<std::size_t>{20, 21, 23}));
  EXPECT_EQ(r.requested, 4u);
  EXPECT_EQ(r.to_json()["skipped"].size(), 1u);
}

TEST(Evaluate, EmptyTestSetRejected) {
  Network gen = small_generator(1);
  EXPECT_THROW(final_eval(gen, Tensor(), {}), ConfigError);
}

TEST(Evaluate, FinalBudgetNotWorseThanRunning) {
  Network gen = small_generator(6);
  const Tensor x = test::randn({6, 2}, 4, 4);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  const EvalReport run = running_eval(gen, x, idx);
  const EvalReport fin = final_eval(gen, x, idx, {.steps = 500});
  EXPECT_LE(fin.mean_loss, run.mean_loss * (1.0 + 1e-9));
  EXPECT_EQ(fin.mode, "final");
}

TEST(Evaluate, CsvAndJsonOutput) {
  Network gen = small_generator(1);
  const EvalReport r = running_eval(gen, test::randn({2, 2}, 1, 1), {4, 9}, {.steps = 3});
  const auto dir = std::filesystem::temp_directory_path() / "wngan_eval_out";
  std::filesystem::create_directories(dir);
  r.write_csv((dir / "r.csv").string());
  r.write_json((dir / "r.json").string());
  std::ifstream csv(dir / "r.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "index,loss");
  EXPECT_EQ(row.substr(0, 2), "4,");
  std::ifstream js(dir / "r.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["steps"], 3);
  EXPECT_DOUBLE_EQ(j["mean_loss"].get<double>(), r.mean_loss);
}
