#include "itogen/generator.hpp"
#include "itogen/njode.hpp"

#include <benchmark/benchmark.h>

using namespace itogen;

namespace {

gen::GenerateOptions options(std::size_t n) {
  gen::GenerateOptions o;
  o.delta = 0.01;
  o.K = 100.0;
  o.horizon = 1.0;
  o.n_paths = n;
  o.seed = 1;
  return o;
}

}  // namespace

static void BM_GenerateAnalyticGbm(benchmark::State& state) {
  const auto spec = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = gen::generate_from([&] { return std::make_unique<gen::AnalyticCoefficients>(spec); },
                                Vec::Ones(1), options(n));
    benchmark::DoNotOptimize(r.paths.raw().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_GenerateAnalyticGbm)->Arg(1000)->Unit(benchmark::kMillisecond);

// Learned coefficients: one NJODE evaluation and jump per generation step.
static void BM_GenerateNjodeJointInstant(benchmark::State& state) {
  const auto bundle =
      njode::ModelBundle::make(Scheme::kJointInstant, 1, njode::Architecture{}, 3);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    auto r = gen::generate_from(
        [&] { return std::make_unique<gen::NjodeCoefficients>(bundle, 0.01); }, Vec::Ones(1),
        options(n));
    benchmark::DoNotOptimize(r.paths.raw().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_GenerateNjodeJointInstant)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);
