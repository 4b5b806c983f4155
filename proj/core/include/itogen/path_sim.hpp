#pragma once

#include "itogen/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace itogen::sim {

enum class SdeKind { kGbm, kOu, kCustom };

std::string to_string(SdeKind kind);
SdeKind sde_kind_from_string(const std::string& name);

// Parameters of the benchmark SDEs.  GBM uses {"mu", "sigma"} and OU uses
// {"kappa", "theta", "sigma"}; both act coordinate-wise with independent
// Brownian drivers.  Custom processes supply their coefficient functions.
struct SdeSpec {
  using DriftFn = std::function<Vec(double t, const Vec& x)>;
  using DiffusionFn = std::function<Mat(double t, const Vec& x)>;

  SdeKind kind = SdeKind::kGbm;
  std::map<std::string, double> params;
  Vec x0;
  DriftFn drift_fn;
  DiffusionFn diffusion_fn;

  static SdeSpec gbm(double mu, double sigma, Vec x0);
  static SdeSpec ou(double kappa, double theta, double sigma, Vec x0);

  int dim() const { return static_cast<int>(x0.size()); }
  double param(const std::string& name) const;

  // Throws ConfigError when the invariants for `kind` do not hold.
  void validate() const;

  Vec drift(double t, const Vec& x) const;
  // d x m loading matrix (m = d for the built-in kinds).
  Mat diffusion(double t, const Vec& x) const;
};

// A regular grid.  Times are index * dt.
struct Grid {
  double dt = 0.01;
  std::size_t n_steps = 100;

  double time(GridIndex k) const { return static_cast<double>(k) * dt; }
  double horizon() const { return time(n_steps); }
  std::size_t n_points() const { return n_steps + 1; }

  // Grid with n_steps = T / dt; throws ConfigError unless dt > 0, T > 0 and
  // T / dt is integral to within 1e-9 relative.
  static Grid from_horizon(double T, double dt);

  bool operator==(const Grid&) const = default;
};

// Sample paths on a regular grid, stored [path][time][coord].
class PathDataset {
 public:
  PathDataset() = default;
  PathDataset(Grid grid, int dim, std::size_t n_paths, std::uint64_t seed);

  const Grid& grid() const { return grid_; }
  int dim() const { return dim_; }
  std::size_t n_paths() const { return path_ids_.size(); }
  std::uint64_t seed() const { return seed_; }

  double& at(std::size_t path, GridIndex k, int coord) {
    return values_[offset(path, k) + static_cast<std::size_t>(coord)];
  }
  double at(std::size_t path, GridIndex k, int coord) const {
    return values_[offset(path, k) + static_cast<std::size_t>(coord)];
  }
  Eigen::Map<Vec> point(std::size_t path, GridIndex k) {
    return {values_.data() + offset(path, k), dim_};
  }
  Eigen::Map<const Vec> point(std::size_t path, GridIndex k) const {
    return {values_.data() + offset(path, k), dim_};
  }

  // Stable identifiers that survive subsetting (serialized as path_id).
  std::span<const std::size_t> path_ids() const { return path_ids_; }
  std::vector<std::size_t>& mutable_path_ids() { return path_ids_; }

  std::span<const double> raw() const { return values_; }

  // Coordinate `coord` of every path at grid index k.
  std::vector<double> marginal(GridIndex k, int coord = 0) const;

  PathDataset subset(std::span<const std::size_t> rows) const;

  bool operator==(const PathDataset& other) const = default;

 private:
  std::size_t offset(std::size_t path, GridIndex k) const {
    return (path * grid_.n_points() + k) * static_cast<std::size_t>(dim_);
  }

  Grid grid_;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> path_ids_;
  std::vector<double> values_;
};

// One observation: masked values at a grid point.
struct Observation {
  GridIndex index = 0;
  Vec values;  // M ⊙ X (zeros where masked)
  Vec mask;    // entries in {0, 1}
};

// The information sequence of one path: observations in increasing time,
// starting with a fully observed point at index 0.
class ObservationSequence {
 public:
  ObservationSequence() = default;
  ObservationSequence(double dt, std::vector<Observation> obs);

  double dt() const { return dt_; }
  const std::vector<Observation>& observations() const { return obs_; }
  std::size_t size() const { return obs_.size(); }
  int dim() const;

  double time(std::size_t i) const {
    return static_cast<double>(obs_[i].index) * dt_;
  }
  // Last observation time <= t.
  double tau(double t) const;
  // Index of the last observation at or before t; t_0 has index 0.
  std::size_t kappa(double t) const;

  // Observations with time <= t.
  ObservationSequence truncated(double t) const;
  // Index of the last observation at or before grid index k.
  std::size_t last_at_or_before(GridIndex k) const;

  // Throws DataError unless the sequence is well formed.
  void validate() const;

 private:
  double dt_ = 0.0;
  std::vector<Observation> obs_;
};

// Euler scheme X_{s+dt} = X_s + mu dt + sigma sqrt(dt) eps on the grid
// [0, T].  Each path draws from its own substream of `seed`.
PathDataset simulate(const SdeSpec& spec, double T, double dt,
                     std::size_t n_paths, std::uint64_t seed);

// Exact-transition sampler for GBM and OU, used as an oracle in tests.
PathDataset simulate_exact(const SdeSpec& spec, double T, double dt,
                           std::size_t n_paths, std::uint64_t seed);

struct ObserveOptions {
  double p = 0.1;
  // When set, each coordinate of a sampled time is revealed independently
  // with this probability; otherwise all coordinates are observed jointly.
  std::optional<double> coord_p;
};

std::vector<ObservationSequence> observe(const PathDataset& ds,
                                         const ObserveOptions& options,
                                         std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
};

// Seeded shuffle, then the first round(fraction * n) rows go to training.
// Both parts are returned in increasing row order.
SplitIndices split_indices(std::size_t n_paths, double fraction,
                           std::uint64_t seed);

std::pair<PathDataset, PathDataset> split(const PathDataset& ds,
                                          double fraction, std::uint64_t seed);

template <typename T>
std::vector<T> take_rows(const std::vector<T>& items,
                         std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(items.at(r));
  return out;
}

}  // namespace itogen::sim
