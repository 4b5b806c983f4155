#include "itogen/rng.hpp"

#include <benchmark/benchmark.h>

using namespace itogen;

static void BM_PhiloxRaw(benchmark::State& state) {
  Philox4x32 rng(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rng());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PhiloxRaw);

static void BM_PhiloxNormal(benchmark::State& state) {
  Philox4x32 rng(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rng.normal());
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PhiloxNormal);

// Opening a fresh stream per path, as the simulator and generator do.
static void BM_StreamPerPath(benchmark::State& state) {
  std::uint64_t path = 0;
  for (auto _ : state) {
    auto rng = make_stream(7, StreamDomain::kSimulate, path++);
    benchmark::DoNotOptimize(rng.normal());
  }
}
BENCHMARK(BM_StreamPerPath);
