#pragma once

#include "itogen/path_sim.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace itogen::eval {

struct FilterResult {
  sim::PathDataset valid;
  std::size_t invalid = 0;
};

// Drops paths with any value <= 0 (or non-finite).
FilterResult filter_invalid_gbm(const sim::PathDataset& ds);

struct GbmEstimate {
  double mu = 0.0;
  double sigma = 0.0;
};

// Pooled log-returns r over all paths and steps:
//   sigma = sqrt(Var(r) / dt)  (population variance),  mu = mean(r) / dt + sigma^2 / 2.
// Throws DataError on a non-positive value.
GbmEstimate estimate_gbm(const sim::PathDataset& ds);

struct OuEstimate {
  double kappa = 0.0;
  double theta = 0.0;
  double sigma = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

// Pooled least squares X_{k+1} = alpha + beta X_k + e, then
//   kappa = -log(beta) / dt, theta = alpha / (1 - beta),
//   sigma = s sqrt(2 kappa) / sqrt(1 - beta^2)
// with s the residual standard deviation.  Throws EstimationDomainError
// unless 0 < beta < 1.
OuEstimate estimate_ou(const sim::PathDataset& ds);

double ks_statistic(std::vector<double> a, std::vector<double> b);
// Asymptotic two-sample critical value c(alpha) sqrt((n + m) / (n m)).
double ks_critical(std::size_t n, std::size_t m, double alpha = 0.01);

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted_or_not, double q);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts_a;
  std::vector<std::size_t> counts_b;
};

// Freedman-Diaconis bins on the union of both samples, shared by both.
Histogram shared_histogram(std::span<const double> a, std::span<const double> b,
                           std::size_t max_bins = 200);

inline const std::vector<double>& quantile_levels() {
  static const std::vector<double> levels{0.05, 0.25, 0.5, 0.75, 0.95};
  return levels;
}

struct MarginalComparison {
  double time = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double ks = 0.0;
  double ks_critical = 0.0;
  std::vector<double> quantiles_a;
  std::vector<double> quantiles_b;
  Histogram histogram;

  double mean_delta() const { return mean_b - mean_a; }
  double var_delta() const { return var_b - var_a; }
};

// Compares coordinate `coord` at each time; both grids must contain every
// time.  Throws DataError for empty datasets or off-grid times.
std::vector<MarginalComparison> compare_marginals(const sim::PathDataset& a,
                                                  const sim::PathDataset& b,
                                                  std::span<const double> times,
                                                  int coord = 0);

struct EvalReport {
  // dataset label -> parameter name -> value
  std::map<std::string, std::map<std::string, double>> estimates;
  std::map<std::string, std::size_t> invalid_paths;
  std::map<std::string, std::size_t> total_paths;
  std::vector<MarginalComparison> marginals;
  std::string reference_label;
  std::string candidate_label;

  std::string to_json() const;
  // time,bin_lo,bin_hi,count_a,count_b
  std::string histograms_csv() const;
};

}  // namespace itogen::eval
