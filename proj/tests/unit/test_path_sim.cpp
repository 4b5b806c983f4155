#include "itogen/errors.hpp"
#include "itogen/path_sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace itogen;
using sim::SdeSpec;

namespace {

std::pair<double, double> mean_var(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size() - 1)};
}

}  // namespace

TEST(Simulate, DeterministicEulerIterate) {
  const auto ds = sim::simulate(SdeSpec::gbm(2.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 3, 1);
  for (std::size_t p = 0; p < 3; ++p) {
    EXPECT_NEAR(ds.at(p, 100, 0), std::pow(1.02, 100), 1e-12);
  }
  EXPECT_NEAR(std::pow(1.02, 100), 7.2446, 1e-4);
}

TEST(Simulate, ZeroCoefficientsStayConstant) {
  const auto ds = sim::simulate(SdeSpec::gbm(0.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 4, 9);
  for (double v : ds.raw()) EXPECT_EQ(v, 1.0);
}

TEST(Simulate, GbmMomentsMatchClosedForm) {
  const double mu = 2.0;
  const double sigma = 0.3;
  const auto ds = sim::simulate(SdeSpec::gbm(mu, sigma, Vec::Ones(1)), 1.0, 0.01, 20000, 11);
  for (GridIndex k : {GridIndex{50}, GridIndex{100}}) {
    const double t = ds.grid().time(k);
    const auto [m, v] = mean_var(ds.marginal(k));
    const double true_m = std::exp(mu * t);
    const double true_v = std::exp(2 * mu * t) * (std::exp(sigma * sigma * t) - 1.0);
    const double se = std::sqrt(true_v / 20000.0);
    // Euler bias (1 + mu dt)^n vs e^{mu t} is inside the allowance.
    const double euler = std::abs(std::pow(1.0 + mu * 0.01, static_cast<double>(k)) - true_m);
    EXPECT_NEAR(m, true_m, 4.0 * se + euler);
    EXPECT_NEAR(v, true_v, 0.1 * true_v);
  }
  EXPECT_NEAR(mean_var(ds.marginal(100)).first, std::exp(2.0), 4.0 * 1.4 / std::sqrt(20000.0) + 0.2);
}

TEST(Simulate, OuMeanMatchesClosedForm) {
  const double kappa = 2.0, theta = 3.0, sigma = 1.0, x0 = 1.0;
  const auto ds = sim::simulate(SdeSpec::ou(kappa, theta, sigma, Vec::Constant(1, x0)), 1.0,
                                0.01, 20000, 5);
  for (GridIndex k : {GridIndex{25}, GridIndex{100}}) {
    const double t = ds.grid().time(k);
    const auto [m, v] = mean_var(ds.marginal(k));
    const double expected = theta + (x0 - theta) * std::exp(-kappa * t);
    EXPECT_NEAR(m, expected, 4.0 * std::sqrt(v / 20000.0) + 0.01 * std::abs(theta - x0));
  }
}

TEST(Simulate, SeedDeterminism) {
  const auto spec = SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  EXPECT_EQ(sim::simulate(spec, 1.0, 0.01, 50, 3), sim::simulate(spec, 1.0, 0.01, 50, 3));
  EXPECT_NE(sim::simulate(spec, 1.0, 0.01, 50, 3).raw()[5],
            sim::simulate(spec, 1.0, 0.01, 50, 4).raw()[5]);
}

TEST(Simulate, RejectsBadGrid) {
  const auto spec = SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  EXPECT_THROW(sim::simulate(spec, 1.0, 0.0, 5, 1), ConfigError);
  EXPECT_THROW(sim::simulate(spec, 0.0, 0.01, 5, 1), ConfigError);
  EXPECT_THROW(sim::simulate(spec, 1.0, 0.03, 5, 1), ConfigError);
  EXPECT_THROW(SdeSpec::ou(-1.0, 0.0, 1.0, Vec::Ones(1)).validate(), ConfigError);
  EXPECT_THROW(SdeSpec::gbm(1.0, -0.1, Vec::Ones(1)).validate(), ConfigError);
}

TEST(Simulate, ExactSamplerMatchesGbmLaw) {
  const auto ds = sim::simulate_exact(SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 20000, 2);
  const auto [m, v] = mean_var(ds.marginal(100));
  EXPECT_NEAR(m, std::exp(2.0), 4.0 * std::sqrt(v / 20000.0));
}

TEST(Observe, FullProbabilityObservesEveryPoint) {
  const auto ds = sim::simulate(SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 5, 1);
  const auto obs = sim::observe(ds, {1.0, std::nullopt}, 2);
  for (const auto& o : obs) EXPECT_EQ(o.size(), 101u);
}

TEST(Observe, ZeroProbabilityKeepsOnlyStart) {
  const auto ds = sim::simulate(SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 5, 1);
  const auto obs = sim::observe(ds, {0.0, std::nullopt}, 2);
  for (const auto& o : obs) {
    ASSERT_EQ(o.size(), 1u);
    EXPECT_EQ(o.observations()[0].index, 0u);
    EXPECT_EQ(o.observations()[0].mask, Vec::Ones(1));
  }
}

TEST(Observe, MeanCountIsBinomial) {
  const auto ds = sim::simulate(SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 4000, 1);
  const auto obs = sim::observe(ds, {0.1, std::nullopt}, 3);
  double total = 0.0;
  for (const auto& o : obs) total += static_cast<double>(o.size());
  const double mean = total / 4000.0;
  const double sd = std::sqrt(100 * 0.1 * 0.9 / 4000.0);
  EXPECT_NEAR(mean, 11.0, 3.0 * sd);
}

TEST(Observe, TauAndKappa) {
  sim::ObservationSequence seq(0.01, {{0, Vec::Ones(1), Vec::Ones(1)},
                                      {10, Vec::Constant(1, 2.0), Vec::Ones(1)},
                                      {30, Vec::Constant(1, 3.0), Vec::Ones(1)}});
  EXPECT_DOUBLE_EQ(seq.tau(0.05), 0.0);
  EXPECT_DOUBLE_EQ(seq.tau(0.1), 0.1);
  EXPECT_DOUBLE_EQ(seq.tau(0.29), 0.1);
  // kappa is the index of the last observation, t_0 = 0 having index 0.
  EXPECT_EQ(seq.kappa(0.05), 0u);
  EXPECT_EQ(seq.kappa(0.1), 1u);
  EXPECT_EQ(seq.kappa(0.3), 2u);
  EXPECT_EQ(seq.truncated(0.2).size(), 2u);
}

TEST(Observe, PerCoordinateMasks) {
  const auto ds = sim::simulate(SdeSpec::gbm(2.0, 0.3, Vec::Ones(2)), 1.0, 0.01, 200, 1);
  const auto obs = sim::observe(ds, {1.0, 0.5}, 4);
  std::size_t partial = 0;
  for (const auto& o : obs) {
    EXPECT_EQ(o.observations()[0].mask, Vec::Ones(2));
    for (std::size_t i = 1; i < o.size(); ++i) {
      const auto& ob = o.observations()[i];
      EXPECT_GT(ob.mask.sum(), 0.0);
      if (ob.mask.sum() < 2.0) ++partial;
      for (int j = 0; j < 2; ++j) {
        if (ob.mask[j] == 0.0) EXPECT_EQ(ob.values[j], 0.0);
      }
    }
  }
  EXPECT_GT(partial, 0u);
}

TEST(Split, Sizes) {
  auto a = sim::split_indices(20000, 0.8, 1);
  EXPECT_EQ(a.train.size(), 16000u);
  EXPECT_EQ(a.valid.size(), 4000u);
  auto b = sim::split_indices(10, 0.8, 1);
  EXPECT_EQ(b.train.size(), 8u);
  EXPECT_EQ(b.valid.size(), 2u);
}

TEST(Split, DisjointOrderedAndDeterministic) {
  auto a = sim::split_indices(100, 0.8, 5);
  auto b = sim::split_indices(100, 0.8, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.valid, b.valid);
  EXPECT_TRUE(std::is_sorted(a.train.begin(), a.train.end()));
  EXPECT_TRUE(std::is_sorted(a.valid.begin(), a.valid.end()));
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.valid.begin(), a.valid.end());
  EXPECT_EQ(all.size(), 100u);
  EXPECT_THROW(sim::split_indices(10, 1.0, 1), ConfigError);
}
