#include <benchmark/benchmark.h>

#include "rebarnet/layers.hpp"
#include "rebarnet/netdef.hpp"
#include "rebarnet/rng.hpp"

namespace {

using namespace rebarnet;

Tensor random_batch(int n, int h, int w, std::uint64_t seed) {
  Tensor t({n, 1, h, w});
  Rng rng(seed);
  double* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.uniform();
  return t;
}

void BM_TranetForward(benchmark::State& state) {
  Network net = init_params(build_tranet(28, 28), 1);
  const Tensor batch = random_batch(32, 28, 28, 2);
  for (auto _ : state) benchmark::DoNotOptimize(infer_logits(net, batch));
}
BENCHMARK(BM_TranetForward)->Unit(benchmark::kMicrosecond);

void BM_TranetTrainStep(benchmark::State& state) {
  Network net = init_params(build_tranet(28, 28), 1);
  const Tensor batch = random_batch(32, 28, 28, 2);
  std::vector<int> labels(32);
  for (int i = 0; i < 32; ++i) labels[static_cast<std::size_t>(i)] = i % 4;
  for (auto _ : state) {
    Tape tape;
    const Tensor logits = forward(net, batch, true, 7, &tape);
    const SoftmaxXentResult sx = softmax_xent(logits, labels);
    benchmark::DoNotOptimize(backward(net, tape, sx.grad_logits));
  }
}
BENCHMARK(BM_TranetTrainStep)->Unit(benchmark::kMicrosecond);

void BM_AlexnetS8Forward(benchmark::State& state) {
  Network net = init_params(build_alexnet(64, 64, 4, 1, 0.125), 1);
  const Tensor batch = random_batch(8, 64, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(infer_logits(net, batch));
}
BENCHMARK(BM_AlexnetS8Forward)->Unit(benchmark::kMicrosecond);

}  // namespace
