#include "itogen/errors.hpp"
#include "itogen/eval.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>

using namespace itogen;

namespace {

sim::PathDataset from_rows(const std::vector<std::vector<double>>& rows, double dt) {
  sim::PathDataset ds(sim::Grid{dt, rows.front().size() - 1}, 1, rows.size(), 0);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    for (std::size_t k = 0; k < rows[p].size(); ++k) ds.at(p, k, 0) = rows[p][k];
  }
  return ds;
}

sim::PathDataset scaled(const sim::PathDataset& ds, double c, double shift) {
  sim::PathDataset out = ds;
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    for (GridIndex k = 0; k < ds.grid().n_points(); ++k) out.at(p, k, 0) = c * ds.at(p, k, 0) + shift;
  }
  return out;
}

}  // namespace

TEST(Filter, CountsNonPositivePaths) {
  const auto ds = from_rows({{1, 2, 3}, {1, 0, 2}, {1, 1.5, 2}, {1, -1, 1}}, 0.5);
  const auto f = eval::filter_invalid_gbm(ds);
  EXPECT_EQ(f.invalid, 2u);
  EXPECT_EQ(f.valid.n_paths(), 2u);
  EXPECT_EQ(eval::filter_invalid_gbm(f.valid).invalid, 0u);
}

TEST(EstimateGbm, DeterministicExponential) {
  const auto ds = sim::simulate_exact(sim::SdeSpec::gbm(2.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 3, 1);
  const auto e = eval::estimate_gbm(ds);
  EXPECT_NEAR(e.mu, 2.0, 1e-10);
  EXPECT_NEAR(e.sigma, 0.0, 1e-6);
}

TEST(EstimateGbm, ExactTransitionSamples) {
  const auto ds = sim::simulate_exact(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 20000, 4);
  const auto e = eval::estimate_gbm(ds);
  EXPECT_NEAR(e.mu, 2.0, 0.03);
  EXPECT_NEAR(e.sigma, 0.3, 0.005);
}

TEST(EstimateGbm, ScaleEquivariant) {
  const auto ds = sim::simulate_exact(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 200, 5);
  const auto a = eval::estimate_gbm(ds);
  const auto b = eval::estimate_gbm(scaled(ds, 3.7, 0.0));
  EXPECT_NEAR(a.mu, b.mu, 1e-9);
  EXPECT_NEAR(a.sigma, b.sigma, 1e-9);
  EXPECT_THROW(eval::estimate_gbm(from_rows({{1, 0, 1}}, 0.5)), DataError);
}

TEST(EstimateOu, NoiselessExactRecovery) {
  const auto ds =
      sim::simulate_exact(sim::SdeSpec::ou(2.0, 3.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 2, 1);
  const auto e = eval::estimate_ou(ds);
  EXPECT_NEAR(e.kappa, 2.0, 1e-8);
  EXPECT_NEAR(e.theta, 3.0, 1e-8);
  EXPECT_NEAR(e.sigma, 0.0, 1e-6);
}

TEST(EstimateOu, ExactTransitionSamples) {
  const auto ds =
      sim::simulate_exact(sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1)), 1.0, 0.01, 20000, 6);
  const auto e = eval::estimate_ou(ds);
  EXPECT_NEAR(e.kappa, 2.0, 0.04);
  EXPECT_NEAR(e.theta, 3.0, 0.06);
  EXPECT_NEAR(e.sigma, 1.0, 0.02);
}

TEST(EstimateOu, ShiftMovesOnlyTheta) {
  const auto ds =
      sim::simulate_exact(sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1)), 1.0, 0.01, 300, 7);
  const auto a = eval::estimate_ou(ds);
  const auto b = eval::estimate_ou(scaled(ds, 1.0, 5.0));
  EXPECT_NEAR(b.theta, a.theta + 5.0, 1e-8);
  EXPECT_NEAR(b.kappa, a.kappa, 1e-8);
  EXPECT_NEAR(b.sigma, a.sigma, 1e-8);
}

TEST(EstimateOu, SlopeOutsideUnitIntervalIsDomainError) {
  // Alternating sign gives a negative slope.
  EXPECT_THROW(eval::estimate_ou(from_rows({{1, -1, 1, -1, 1}}, 0.1)), EstimationDomainError);
  // Explosive growth gives a slope above one.
  EXPECT_THROW(eval::estimate_ou(from_rows({{1, 2, 4, 8, 16}}, 0.1)), EstimationDomainError);
}

TEST(Ks, ExtremeCases) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_EQ(eval::ks_statistic(a, a), 0.0);
  EXPECT_EQ(eval::ks_statistic({0, 0, 0}, {1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(eval::ks_statistic({1, 2}, {3, 4, 5}), eval::ks_statistic({3, 4, 5}, {1, 2}));
}

TEST(Ks, CriticalValue) {
  // c(0.01) = sqrt(-ln(0.005) / 2) ~ 1.6276.
  const double c = std::sqrt(-0.5 * std::log(0.005));
  EXPECT_NEAR(eval::ks_critical(1000, 1000), c * std::sqrt(2.0 / 1000.0), 1e-12);
  EXPECT_NEAR(c, 1.6276, 1e-4);
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(eval::quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(eval::quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(eval::quantile(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(eval::quantile(v, 1.0), 4.0);
}

TEST(Histogram, SharedBinsCoverBothSamples) {
  std::vector<double> a;
  std::vector<double> b;
  for (int i = 0; i < 500; ++i) {
    a.push_back(i * 0.01);
    b.push_back(2.0 + i * 0.01);
  }
  const auto h = eval::shared_histogram(a, b);
  ASSERT_EQ(h.counts_a.size() + 1, h.edges.size());
  EXPECT_LE(h.counts_a.size(), 200u);
  EXPECT_LE(h.edges.front(), 0.0);
  EXPECT_GE(h.edges.back(), 6.99);
  std::size_t na = 0;
  std::size_t nb = 0;
  for (std::size_t i = 0; i < h.counts_a.size(); ++i) {
    na += h.counts_a[i];
    nb += h.counts_b[i];
  }
  EXPECT_EQ(na, 500u);
  EXPECT_EQ(nb, 500u);
}

TEST(CompareMarginals, SelfComparisonIsZero) {
  const auto ds = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 300, 1);
  const std::vector<double> times{0.5, 1.0};
  const auto c = eval::compare_marginals(ds, ds, times);
  ASSERT_EQ(c.size(), 2u);
  for (const auto& m : c) {
    EXPECT_EQ(m.ks, 0.0);
    EXPECT_EQ(m.mean_delta(), 0.0);
    EXPECT_EQ(m.var_delta(), 0.0);
    EXPECT_EQ(m.quantiles_a, m.quantiles_b);
  }
}

TEST(CompareMarginals, SymmetricKs) {
  const auto a = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 200, 1);
  const auto b = sim::simulate(sim::SdeSpec::gbm(2.0, 0.35, Vec::Ones(1)), 1.0, 0.01, 150, 2);
  const std::vector<double> times{0.5};
  EXPECT_DOUBLE_EQ(eval::compare_marginals(a, b, times)[0].ks,
                   eval::compare_marginals(b, a, times)[0].ks);
}

TEST(CompareMarginals, TrueVsTrueBelowCritical) {
  const auto a = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 1000, 1);
  const auto b = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 1000, 2);
  const std::vector<double> times{0.5, 1.0};
  for (const auto& m : eval::compare_marginals(a, b, times)) EXPECT_LT(m.ks, m.ks_critical);
}

TEST(CompareMarginals, OffGridTimeRejected) {
  const auto a = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 10, 1);
  const std::vector<double> times{0.505};
  EXPECT_ANY_THROW(eval::compare_marginals(a, a, times));
}

TEST(Report, JsonContainsEstimatesAndMarginals) {
  eval::EvalReport r;
  r.reference_label = "reference";
  r.candidate_label = "generated";
  r.estimates["reference"] = {{"mu", 2.0}, {"sigma", 0.3}};
  r.invalid_paths["reference"] = 0;
  r.total_paths["reference"] = 10;
  const auto ds = sim::simulate(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01, 20, 1);
  const std::vector<double> times{0.5};
  r.marginals = eval::compare_marginals(ds, ds, times);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_DOUBLE_EQ(j["estimates"]["reference"]["mu"].get<double>(), 2.0);
  EXPECT_EQ(j["marginals"].size(), 1u);
  EXPECT_NE(r.histograms_csv().find("time"), std::string::npos);
}
