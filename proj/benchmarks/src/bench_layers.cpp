#include <benchmark/benchmark.h>

#include "rebarnet/layers.hpp"
#include "rebarnet/rng.hpp"
#include "rebarnet/tensor.hpp"

namespace {

using namespace rebarnet;

Tensor randn(const std::vector<int>& shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  double* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.normal();
  return t;
}

const ConvParams kConv{16, 3, 3, 1, 1};

void BM_Conv2dIm2col(benchmark::State& state) {
  const Tensor x = randn({8, 8, 28, 28}, 1);
  const Tensor w = randn({16, 8, 3, 3}, 2);
  const Tensor b = randn({16}, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d_forward(x, w, b, kConv));
}
BENCHMARK(BM_Conv2dIm2col)->Unit(benchmark::kMicrosecond);

void BM_Conv2dNaive(benchmark::State& state) {
  const Tensor x = randn({8, 8, 28, 28}, 1);
  const Tensor w = randn({16, 8, 3, 3}, 2);
  const Tensor b = randn({16}, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d_forward_naive(x, w, b, kConv));
}
BENCHMARK(BM_Conv2dNaive)->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = randn({8, 8, 28, 28}, 1);
  const Tensor w = randn({16, 8, 3, 3}, 2);
  const Tensor b = randn({16}, 3);
  const Tensor g = randn(conv2d_forward(x, w, b, kConv).shape(), 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d_backward(x, w, kConv, g));
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMicrosecond);

void BM_MaxPool(benchmark::State& state) {
  const Tensor x = randn({8, 16, 28, 28}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(maxpool_forward(x, 2, 2, 2));
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMicrosecond);

void BM_AvgPool(benchmark::State& state) {
  const Tensor x = randn({8, 16, 28, 28}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(avgpool_forward(x, 2, 2, 2));
}
BENCHMARK(BM_AvgPool)->Unit(benchmark::kMicrosecond);

void BM_Lrn(benchmark::State& state) {
  const Tensor x = randn({8, 32, 13, 13}, 1);
  const LrnParams p;
  for (auto _ : state) benchmark::DoNotOptimize(lrn_forward(x, p));
}
BENCHMARK(BM_Lrn)->Unit(benchmark::kMicrosecond);

void BM_BatchNorm(benchmark::State& state) {
  const Tensor x = randn({8, 16, 28, 28}, 1);
  const Tensor gamma = Tensor::full({16}, 1.0);
  const Tensor beta = Tensor::full({16}, 0.0);
  Tensor rmean({16});
  Tensor rvar = Tensor::full({16}, 1.0);
  for (auto _ : state) {
    BatchNormCache cache;
    benchmark::DoNotOptimize(batchnorm_forward(x, gamma, beta, 1e-5, true,
                                               rmean, rvar, 0.1, &cache));
  }
}
BENCHMARK(BM_BatchNorm)->Unit(benchmark::kMicrosecond);

void BM_Dense(benchmark::State& state) {
  const Tensor x = randn({32, 288}, 1);
  const Tensor w = randn({288, 4}, 2);
  const Tensor b = randn({4}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dense_forward(x, w, b));
}
BENCHMARK(BM_Dense)->Unit(benchmark::kMicrosecond);

void BM_ResizeBilinear(benchmark::State& state) {
  const Tensor x = randn({1, 80, 200}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(resize_bilinear(x, 28, 28));
}
BENCHMARK(BM_ResizeBilinear)->Unit(benchmark::kMicrosecond);

}  // namespace
