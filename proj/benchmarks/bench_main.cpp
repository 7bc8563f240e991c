#include <benchmark/benchmark.h>

#include "wngan/evaluation.hpp"
#include "wngan/layers.hpp"
#include "wngan/training.hpp"

using namespace wngan;

namespace {

void BM_StrictWNLinearForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  StrictWNLinear layer(n, n);
  CounterRng rng(1, 1);
  layer.reset_parameters(rng);
  const Tensor x = rng.normal_tensor({64, n});
  for (auto _ : state) {
    layer.weight.zero_grad();
    backward(sum(layer.forward(Var::constant(x), Mode::Train)));
    const Tensor g = layer.weight.grad();
    benchmark::DoNotOptimize(g.data().data());
  }
}
BENCHMARK(BM_StrictWNLinearForwardBackward)->Arg(32)->Arg(128);

void BM_WNConvForwardBackward(benchmark::State& state) {
  const auto s = static_cast<std::size_t>(state.range(0));
  WNConv2d layer(16, 32, 4, ConvGeometry::square(2, 1), WNMode::Strict);
  CounterRng rng(1, 2);
  layer.reset_parameters(rng);
  const Tensor x = rng.normal_tensor({8, 16, s, s});
  for (auto _ : state) {
    layer.kernel.zero_grad();
    backward(sum(layer.forward(Var::constant(x), Mode::Train)));
    const Tensor g = layer.kernel.grad();
    benchmark::DoNotOptimize(g.data().data());
  }
}
BENCHMARK(BM_WNConvForwardBackward)->Arg(8)->Arg(16);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  const auto variant = static_cast<Variant>(state.range(0));
  GanState gan(cfg, variant, Shape{2});
  CounterRng rng(1, 3);
  const Tensor real = rng.uniform_tensor({cfg.batch_size, 2}, 0.0, 1.0);
  std::size_t it = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(gan, real, ++it));
  state.SetLabel(to_string(variant));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Variant::Vanilla))
    ->Arg(static_cast<int>(Variant::BN))
    ->Arg(static_cast<int>(Variant::WN));

void BM_DcganTrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.architecture = "dcgan";
  GanState gan(cfg, Variant::WN, Shape{3, 8, 8});
  CounterRng rng(1, 4);
  const Tensor real = rng.uniform_tensor({cfg.batch_size, 3, 8, 8}, 0.0, 1.0);
  std::size_t it = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(gan, real, ++it));
}
BENCHMARK(BM_DcganTrainStep)->Unit(benchmark::kMillisecond);

void BM_RunningEval(benchmark::State& state) {
  TrainConfig cfg;
  Network gen(specs_for(cfg, Variant::WN, Shape{2}).generator, 1);
  CounterRng rng(1, 5);
  const Tensor x = rng.uniform_tensor({64, 2}, 0.0, 1.0);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (auto _ : state) benchmark::DoNotOptimize(running_eval(gen, x, idx).mean_loss);
}
BENCHMARK(BM_RunningEval)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
