#include "itogen/errors.hpp"
#include "itogen/eval.hpp"
#include "itogen/generator.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace itogen;

namespace {

gen::SourceFactory analytic(const sim::SdeSpec& spec) {
  return [spec] { return std::make_unique<gen::AnalyticCoefficients>(spec); };
}

gen::GenerateOptions opts(std::size_t n, std::uint64_t seed = 1) {
  gen::GenerateOptions o;
  o.delta = 0.01;
  o.K = 100.0;
  o.horizon = 1.0;
  o.n_paths = n;
  o.seed = seed;
  return o;
}

}  // namespace

TEST(Generate, ZeroCoefficientsKeepStart) {
  const auto r = gen::generate_from(analytic(sim::SdeSpec::gbm(0, 0, Vec::Constant(1, 1.3))),
                                    Vec::Constant(1, 1.3), opts(20));
  EXPECT_EQ(r.paths.n_paths(), 20u);
  for (double v : r.paths.raw()) EXPECT_EQ(v, 1.3);
}

TEST(Generate, OracleGbmRecoversParameters) {
  const auto r = gen::generate_from(analytic(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1))),
                                    Vec::Ones(1), opts(5000, 7));
  const auto f = eval::filter_invalid_gbm(r.paths);
  EXPECT_EQ(f.invalid, 0u);
  const auto e = eval::estimate_gbm(f.valid);
  EXPECT_NEAR(e.mu, 2.0, 0.05);
  EXPECT_NEAR(e.sigma, 0.3, 0.01);
  EXPECT_EQ(r.stats.model_factor_used, 5000u * 100u);
}

TEST(Generate, BatchingDoesNotChangePaths) {
  const auto spec = sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1));
  auto a = opts(30);
  auto b = opts(30);
  b.batch = 7;
  EXPECT_EQ(gen::generate_from(analytic(spec), Vec::Ones(1), a).paths,
            gen::generate_from(analytic(spec), Vec::Ones(1), b).paths);
}

TEST(Generate, ReplayReproducesAndIsPathwise) {
  const auto spec = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  auto rec = opts(4);
  rec.record_noise = true;
  const auto first = gen::generate_from(analytic(spec), Vec::Ones(1), rec);
  ASSERT_EQ(first.noise.size(), 4u * 100u);
  auto replay = opts(4, 999);
  replay.replay_noise = &first.noise;
  const auto again = gen::generate_from(analytic(spec), Vec::Ones(1), replay);
  EXPECT_EQ(std::vector<double>(first.paths.raw().begin(), first.paths.raw().end()),
            std::vector<double>(again.paths.raw().begin(), again.paths.raw().end()));
  // Each path is a function of its own noise only.
  std::vector<double> changed = first.noise;
  for (std::size_t m = 0; m < 100; ++m) changed[1 * 100 + m] *= -1.0;
  replay.replay_noise = &changed;
  const auto other = gen::generate_from(analytic(spec), Vec::Ones(1), replay);
  for (GridIndex k = 0; k <= 100; ++k) {
    EXPECT_EQ(other.paths.at(0, k, 0), first.paths.at(0, k, 0));
    EXPECT_EQ(other.paths.at(2, k, 0), first.paths.at(2, k, 0));
  }
  EXPECT_NE(other.paths.at(1, 100, 0), first.paths.at(1, 100, 0));
}

TEST(Generate, ContinuationsShareHistory) {
  const auto spec = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  const sim::ObservationSequence hist(0.01, {{0, Vec::Ones(1), Vec::Ones(1)},
                                             {20, Vec::Constant(1, 1.4), Vec::Ones(1)},
                                             {40, Vec::Constant(1, 2.2), Vec::Ones(1)}});
  const auto r = gen::generate_continuations(analytic(spec), hist, opts(10));
  EXPECT_DOUBLE_EQ(r.start_time, 0.4);
  for (std::size_t p = 0; p < 10; ++p) {
    EXPECT_EQ(r.paths.at(p, 0, 0), 1.0);
    EXPECT_EQ(r.paths.at(p, 19, 0), 1.0);
    EXPECT_EQ(r.paths.at(p, 20, 0), 1.4);
    EXPECT_EQ(r.paths.at(p, 40, 0), 2.2);
  }
  EXPECT_NE(r.paths.at(0, 100, 0), r.paths.at(1, 100, 0));
}

TEST(Generate, DivergentPathsAreDroppedAndCounted) {
  sim::SdeSpec spec;
  spec.kind = sim::SdeKind::kCustom;
  spec.x0 = Vec::Ones(1);
  spec.drift_fn = [](double, const Vec& x) {
    return x[0] > 1.05 ? Vec::Constant(1, std::nan("")) : Vec::Zero(1);
  };
  spec.diffusion_fn = [](double, const Vec&) { return Mat::Constant(1, 1, 0.3); };
  const auto r = gen::generate_from(analytic(spec), Vec::Ones(1), opts(50));
  EXPECT_GT(r.diverged, 0u);
  EXPECT_EQ(r.diverged + r.paths.n_paths(), 50u);
  EXPECT_EQ(r.diverged_ids.size(), r.diverged);
}

TEST(Generate, TruncationBoundsDrift) {
  auto o = opts(5);
  o.K = 1.0;
  const auto r = gen::generate_from(analytic(sim::SdeSpec::gbm(50.0, 0.0, Vec::Ones(1))),
                                    Vec::Ones(1), o);
  // |mu| <= K with zero noise: at most K * delta per step.
  EXPECT_NEAR(r.paths.at(0, 100, 0), 2.0, 1e-12);
  EXPECT_EQ(r.stats.truncated_mu, 500u);
}

TEST(Generate, InvalidOptionsRejected) {
  const auto spec = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  auto o = opts(5);
  o.delta = 0.0;
  EXPECT_THROW(gen::generate_from(analytic(spec), Vec::Ones(1), o), ConfigError);
  o = opts(5);
  o.horizon = 0.995;
  EXPECT_THROW(gen::generate_from(analytic(spec), Vec::Ones(1), o), ConfigError);
}

TEST(NjodeSource, ZeroBaselineDriftModelHasZeroDrift) {
  njode::Architecture a;
  a.latent_dim = 6;
  a.hidden = 4;
  auto b = njode::ModelBundle::make(Scheme::kBase, 1, a, 1);
  b.drift_model().set_zero();
  // With zero networks the residual paths make G1 read back the last value,
  // so (G1_{t,delta} - X_t) / delta vanishes.
  gen::NjodeCoefficients src(b, 0.01);
  const Mat x = src.begin(sim::ObservationSequence(0.01, {{0, Vec::Ones(1), Vec::Ones(1)}}), 3);
  const auto cb = src.coefficients(0.0, 0.02, x);
  EXPECT_EQ(cb.mu, Mat::Zero(1, 3));
  EXPECT_FALSE(cb.factor.has_value());
}

TEST(NjodeSource, InstantReadsPostJumpOutput) {
  njode::Architecture a;
  a.latent_dim = 6;
  a.hidden = 4;
  auto b = njode::ModelBundle::make(Scheme::kJointInstant, 1, a, 2);
  gen::NjodeCoefficients src(b, 0.01);
  const sim::ObservationSequence hist(0.01, {{0, Vec::Ones(1), Vec::Ones(1)},
                                             {30, Vec::Constant(1, 1.8), Vec::Ones(1)}});
  const Mat x = src.begin(hist, 2);
  EXPECT_EQ(x, Mat::Constant(1, 2, 1.8));
  const auto cb = src.coefficients(0.3, 0.01, x);
  const auto traj = njode::forward(b.models[0], hist, {0.01, 100}, 1, njode::Mode::kEval);
  EXPECT_NEAR(cb.mu(0, 0), traj.jumps[0].post[0], 1e-12);
  ASSERT_TRUE(cb.factor.has_value());
  EXPECT_NEAR((*cb.factor)(0, 1), traj.jumps[0].post[1], 1e-12);
  EXPECT_NEAR(cb.sigma(0, 0), std::pow(traj.jumps[0].post[1], 2), 1e-12);
}

TEST(NjodeSource, DeterministicForSeed) {
  njode::Architecture a;
  a.latent_dim = 6;
  a.hidden = 4;
  auto b = njode::ModelBundle::make(Scheme::kInstant, 1, a, 3);
  auto run = [&] {
    return gen::generate_from([&] { return std::make_unique<gen::NjodeCoefficients>(b, 0.01); },
                              Vec::Ones(1), opts(6, 4))
        .paths;
  };
  EXPECT_EQ(run(), run());
}
