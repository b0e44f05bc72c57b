#include <benchmark/benchmark.h>

#include "hsicnn/data.hpp"
#include "hsicnn/network.hpp"
#include "hsicnn/ops.hpp"
#include "hsicnn/trainer.hpp"

using namespace hsicnn;

namespace {

Tensor4<float> random_input(Shape4 shape, Rng& rng) {
  Tensor4<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal());
  return t;
}

// args: batch, in channels, out channels, kernel
void BM_ConvForward(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  auto p = make_conv<float>("c", c, static_cast<std::size_t>(state.range(2)),
                            static_cast<std::size_t>(state.range(3)));
  for (auto& v : p.weight.value.vec()) v = static_cast<float>(rng.normal(0, 0.01));
  const auto x = random_input(Shape4{n, c, 5, 5}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
}
BENCHMARK(BM_ConvForward)->Args({128, 200, 128, 1})->Args({128, 200, 128, 5})->Args({128, 384, 128, 1});

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto o = static_cast<std::size_t>(state.range(2));
  auto p = make_conv<float>("c", c, o, static_cast<std::size_t>(state.range(3)));
  for (auto& v : p.weight.value.vec()) v = static_cast<float>(rng.normal(0, 0.01));
  const auto x = random_input(Shape4{n, c, 5, 5}, rng);
  const auto g = random_input(Shape4{n, o, 5, 5}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, p, g));
}
BENCHMARK(BM_ConvBackward)->Args({128, 200, 128, 1})->Args({128, 200, 128, 5})->Args({128, 384, 128, 1});

// One SGD iteration of the full backbone; args: bands, filters, batch.
void BM_TrainIteration(benchmark::State& state) {
  SynthConfig c;
  c.bands = static_cast<std::size_t>(state.range(0));
  c.classes = 8;
  c.height = 32;
  c.width = 32;
  auto ds = synth_generate(c);
  use_all_for_training(ds);
  NetworkSpec s;
  s.bands = c.bands;
  s.classes = c.classes;
  s.filters = static_cast<std::size_t>(state.range(1));
  Rng rng(3);
  auto net = build_backbone<float>(s, rng);
  TrainSchedule sched;
  sched.base_lr = 0.001;
  sched.step_size = 1 << 30;
  sched.max_iter = 1 << 30;
  sched.batch = static_cast<std::size_t>(state.range(2));
  TrainOptions opt;
  opt.evaluate_test = false;
  opt.eval_every = 1 << 30;
  std::int64_t it = 0;
  for (auto _ : state) {
    opt.start_iter = it;
    opt.stop_iter = ++it;
    train_single(net, ds, sched, rng, opt);
  }
  state.SetItemsProcessed(state.iterations() * state.range(2));
}
BENCHMARK(BM_TrainIteration)->Args({32, 16, 32})->Args({200, 128, 128})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
