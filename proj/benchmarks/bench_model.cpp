#include "itogen/losses.hpp"
#include "itogen/mlp.hpp"
#include "itogen/njode.hpp"
#include "itogen/path_sim.hpp"
#include "itogen/tape.hpp"

#include <benchmark/benchmark.h>

using namespace itogen;

namespace {

njode::Architecture default_arch() { return njode::Architecture{}; }

}  // namespace

// Hidden layer of 50 with a 100-dimensional output at batch size state.range(0).
static void BM_MlpForward(benchmark::State& state) {
  nn::Mlp mlp(nn::MlpConfig{104, {50}, 100, nn::Activation::kReLU, 0, 0, 0.0}, "bench");
  auto rng = make_stream(1, StreamDomain::kInit, 0);
  mlp.init(rng);
  const Mat x = Mat::Random(104, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mlp.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(50)->Arg(200);

// Evaluation-mode latent evolution over [0, 1] for a batch of paths.
static void BM_NjodeForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto bundle = njode::ModelBundle::make(Scheme::kJointInstant, 1, default_arch(), 1);
  const auto& model = bundle.models[0];
  for (auto _ : state) {
    njode::BatchState s(model, static_cast<Eigen::Index>(n));
    s.start(Mat::Ones(1, static_cast<Eigen::Index>(n)));
    s.evolve(0.01, 100);
    benchmark::DoNotOptimize(s.time());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NjodeForward)->Arg(50)->Arg(200);

// Recorded Joint Instant loss plus its reverse pass on a batch of paths.
static void BM_JointInstantLossAndGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto bundle = njode::ModelBundle::make(Scheme::kJointInstant, 1, default_arch(), 1);
  const sim::Grid grid{0.01, 100};
  const auto ds = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, n, 1);
  const auto obs = sim::observe(ds, {}, 2);
  const auto targets = loss::build_targets(obs, Scheme::kJointInstant);
  std::vector<const sim::ObservationSequence*> op;
  std::vector<const loss::PathTargets*> tp;
  for (std::size_t i = 0; i < n; ++i) {
    op.push_back(&obs[i]);
    tp.push_back(&targets[i]);
  }
  auto& model = bundle.models[0];
  const loss::LossOptions options{Scheme::kJointInstant, true, true, true};
  auto params = model.parameters();
  for (auto _ : state) {
    const auto g = nn::grad(
        [&](nn::Tape& t) { return loss::batch_loss(t, model, options, op, tp, grid, nullptr); },
        params);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_JointInstantLossAndGradient)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);
