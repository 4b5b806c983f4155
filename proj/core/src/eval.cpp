#include "itogen/eval.hpp"

#include "itogen/dataset_io.hpp"
#include "itogen/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace itogen::eval {

FilterResult filter_invalid_gbm(const sim::PathDataset& ds) {
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    bool ok = true;
    for (GridIndex k = 0; k < ds.grid().n_points() && ok; ++k) {
      for (int j = 0; j < ds.dim(); ++j) {
        const double v = ds.at(p, k, j);
        if (!(v > 0.0) || !std::isfinite(v)) {
          ok = false;
          break;
        }
      }
    }
    if (ok) keep.push_back(p);
  }
  FilterResult out;
  out.invalid = ds.n_paths() - keep.size();
  out.valid = ds.subset(keep);
  return out;
}

GbmEstimate estimate_gbm(const sim::PathDataset& ds) {
  const double dt = ds.grid().dt;
  // Welford accumulation of the pooled log-returns.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    for (GridIndex k = 0; k + 1 < ds.grid().n_points(); ++k) {
      for (int j = 0; j < ds.dim(); ++j) {
        const double a = ds.at(p, k, j);
        const double b = ds.at(p, k + 1, j);
        if (!(a > 0.0) || !(b > 0.0)) {
          throw DataError("GBM estimator needs strictly positive values (path " +
                          std::to_string(ds.path_ids()[p]) + ")");
        }
        const double r = std::log(b / a);
        ++n;
        const double delta = r - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (r - mean);
      }
    }
  }
  if (n < 1) throw DataError("GBM estimator needs at least one return");
  const double var = m2 / static_cast<double>(n);
  GbmEstimate e;
  e.sigma = std::sqrt(var / dt);
  e.mu = mean / dt + 0.5 * e.sigma * e.sigma;
  return e;
}

OuEstimate estimate_ou(const sim::PathDataset& ds) {
  const double dt = ds.grid().dt;
  if (ds.grid().n_points() < 2) throw DataError("OU estimator needs at least two grid points");
  double mx = 0.0, my = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  // Running means and co-moments (Welford form).
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    for (GridIndex k = 0; k + 1 < ds.grid().n_points(); ++k) {
      for (int j = 0; j < ds.dim(); ++j) {
        const double x = ds.at(p, k, j);
        const double y = ds.at(p, k + 1, j);
        ++n;
        const double dx = x - mx;
        mx += dx / static_cast<double>(n);
        my += (y - my) / static_cast<double>(n);
        sxx += dx * (x - mx);
        sxy += dx * (y - my);
      }
    }
  }
  if (n < 2 || !(sxx > 0.0)) throw DataError("OU estimator needs non-degenerate data");
  OuEstimate e;
  e.beta = sxy / sxx;
  e.alpha = my - e.beta * mx;
  if (!(e.beta > 0.0 && e.beta < 1.0)) {
    std::ostringstream msg;
    msg << "OU regression slope beta = " << e.beta << " is outside (0, 1)";
    throw EstimationDomainError(msg.str());
  }
  double ssr = 0.0;
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    for (GridIndex k = 0; k + 1 < ds.grid().n_points(); ++k) {
      for (int j = 0; j < ds.dim(); ++j) {
        const double r = ds.at(p, k + 1, j) - e.alpha - e.beta * ds.at(p, k, j);
        ssr += r * r;
      }
    }
  }
  const double s = std::sqrt(ssr / static_cast<double>(n));
  e.kappa = -std::log(e.beta) / dt;
  e.theta = e.alpha / (1.0 - e.beta);
  e.sigma = s * std::sqrt(2.0 * e.kappa) / std::sqrt(1.0 - e.beta * e.beta);
  return e;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DataError("KS statistic needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  if (n == 0 || m == 0) throw DataError("KS critical value needs non-empty samples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  return c * std::sqrt((nn + mm) / (nn * mm));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DataError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Histogram shared_histogram(std::span<const double> a, std::span<const double> b,
                           std::size_t max_bins) {
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  if (all.empty()) throw DataError("histogram of empty samples");
  const auto [lo_it, hi_it] = std::minmax_element(all.begin(), all.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double iqr = quantile(all, 0.75) - quantile(all, 0.25);
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(all.size()));
  std::size_t bins = 1;
  if (hi > lo && width > 0.0) {
    bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    bins = std::clamp<std::size_t>(bins, 1, std::max<std::size_t>(1, max_bins));
  }
  Histogram h;
  const double span = hi > lo ? hi - lo : 1.0;
  const double left = hi > lo ? lo : lo - 0.5;
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges.push_back(left + span * static_cast<double>(i) / static_cast<double>(bins));
  }
  auto fill = [&](std::span<const double> s, std::vector<std::size_t>& counts) {
    counts.assign(bins, 0);
    for (double v : s) {
      auto idx = static_cast<std::size_t>((v - left) / span * static_cast<double>(bins));
      counts[std::min(idx, bins - 1)] += 1;
    }
  };
  fill(a, h.counts_a);
  fill(b, h.counts_b);
  return h;
}

namespace {

GridIndex index_of(const sim::Grid& g, double t) {
  const double r = t / g.dt;
  const long k = std::lround(r);
  if (k < 0 || static_cast<std::size_t>(k) > g.n_steps ||
      std::abs(r - static_cast<double>(k)) > 1e-9 * std::max(1.0, r)) {
    throw DataError("time " + io::format_double(t) + " is not on the dataset grid");
  }
  return static_cast<GridIndex>(k);
}

std::pair<double, double> mean_var(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size())};
}

}  // namespace

std::vector<MarginalComparison> compare_marginals(const sim::PathDataset& a,
                                                  const sim::PathDataset& b,
                                                  std::span<const double> times, int coord) {
  if (a.n_paths() == 0 || b.n_paths() == 0) throw DataError("cannot compare empty datasets");
  if (coord < 0 || coord >= a.dim() || coord >= b.dim()) throw DataError("coordinate out of range");
  std::vector<MarginalComparison> out;
  for (double t : times) {
    const std::vector<double> xa = a.marginal(index_of(a.grid(), t), coord);
    const std::vector<double> xb = b.marginal(index_of(b.grid(), t), coord);
    MarginalComparison c;
    c.time = t;
    c.n_a = xa.size();
    c.n_b = xb.size();
    std::tie(c.mean_a, c.var_a) = mean_var(xa);
    std::tie(c.mean_b, c.var_b) = mean_var(xb);
    c.ks = ks_statistic(xa, xb);
    c.ks_critical = ks_critical(xa.size(), xb.size());
    for (double q : quantile_levels()) {
      c.quantiles_a.push_back(quantile(xa, q));
      c.quantiles_b.push_back(quantile(xb, q));
    }
    c.histogram = shared_histogram(xa, xb);
    out.push_back(std::move(c));
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["reference"] = reference_label;
  j["candidate"] = candidate_label;
  j["estimates"] = estimates;
  j["invalid_paths"] = invalid_paths;
  j["total_paths"] = total_paths;
  nlohmann::json m = nlohmann::json::array();
  for (const auto& c : marginals) {
    m.push_back({{"time", c.time},
                 {"n_reference", c.n_a},
                 {"n_candidate", c.n_b},
                 {"mean_reference", c.mean_a},
                 {"mean_candidate", c.mean_b},
                 {"var_reference", c.var_a},
                 {"var_candidate", c.var_b},
                 {"mean_delta", c.mean_delta()},
                 {"var_delta", c.var_delta()},
                 {"ks", c.ks},
                 {"ks_critical_1pct", c.ks_critical},
                 {"quantile_levels", quantile_levels()},
                 {"quantiles_reference", c.quantiles_a},
                 {"quantiles_candidate", c.quantiles_b}});
  }
  j["marginals"] = m;
  return j.dump(2) + "\n";
}

std::string EvalReport::histograms_csv() const {
  std::ostringstream out;
  out << "time,bin_lo,bin_hi,count_reference,count_candidate\n";
  for (const auto& c : marginals) {
    const auto& h = c.histogram;
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
      out << io::format_double(c.time) << ',' << io::format_double(h.edges[i]) << ','
          << io::format_double(h.edges[i + 1]) << ',' << h.counts_a[i] << ',' << h.counts_b[i]
          << '\n';
    }
  }
  return out.str();
}

}  // namespace itogen::eval
