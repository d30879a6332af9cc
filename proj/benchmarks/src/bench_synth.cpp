#include <benchmark/benchmark.h>

#include "rebarnet/gprsynth.hpp"

namespace {

using namespace rebarnet;

void BM_RenderBScan(benchmark::State& state) {
  const SceneSpec scene =
      preset_scene(ElementKind::Wall, static_cast<std::uint64_t>(1));
  for (auto _ : state) benchmark::DoNotOptimize(render_bscan(scene));
}
BENCHMARK(BM_RenderBScan)->Unit(benchmark::kMillisecond);

void BM_PresetScene(benchmark::State& state) {
  std::uint64_t seed = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(preset_scene(ElementKind::Slab, seed++));
}
BENCHMARK(BM_PresetScene)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
