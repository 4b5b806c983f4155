#include "itogen/path_sim.hpp"

#include "itogen/errors.hpp"
#include "itogen/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace itogen::sim {

std::string to_string(SdeKind kind) {
  switch (kind) {
    case SdeKind::kGbm:
      return "gbm";
    case SdeKind::kOu:
      return "ou";
    case SdeKind::kCustom:
      return "custom";
  }
  return "unknown";
}

SdeKind sde_kind_from_string(const std::string& name) {
  if (name == "gbm" || name == "GBM") return SdeKind::kGbm;
  if (name == "ou" || name == "OU") return SdeKind::kOu;
  if (name == "custom") return SdeKind::kCustom;
  throw ConfigError("unknown SDE kind '" + name + "' (expected gbm, ou)");
}

SdeSpec SdeSpec::gbm(double mu, double sigma, Vec x0) {
  SdeSpec s;
  s.kind = SdeKind::kGbm;
  s.params = {{"mu", mu}, {"sigma", sigma}};
  s.x0 = std::move(x0);
  return s;
}

SdeSpec SdeSpec::ou(double kappa, double theta, double sigma, Vec x0) {
  SdeSpec s;
  s.kind = SdeKind::kOu;
  s.params = {{"kappa", kappa}, {"theta", theta}, {"sigma", sigma}};
  s.x0 = std::move(x0);
  return s;
}

double SdeSpec::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) {
    throw ConfigError("SDE parameter '" + name + "' missing for kind " +
                      to_string(kind));
  }
  return it->second;
}

void SdeSpec::validate() const {
  if (x0.size() == 0) throw ConfigError("sde.x0 must have at least one entry");
  if (!x0.allFinite()) throw ConfigError("sde.x0 must be finite");
  switch (kind) {
    case SdeKind::kGbm:
      if (!std::isfinite(param("mu"))) throw ConfigError("sde.mu not finite");
      if (!(param("sigma") >= 0.0)) throw ConfigError("sde.sigma must be >= 0");
      break;
    case SdeKind::kOu:
      if (!(param("kappa") > 0.0)) throw ConfigError("sde.kappa must be > 0");
      if (!std::isfinite(param("theta")))
        throw ConfigError("sde.theta not finite");
      if (!(param("sigma") >= 0.0)) throw ConfigError("sde.sigma must be >= 0");
      break;
    case SdeKind::kCustom:
      if (!drift_fn || !diffusion_fn) {
        throw ConfigError("custom SDE requires drift and diffusion functions");
      }
      break;
  }
}

Vec SdeSpec::drift(double t, const Vec& x) const {
  switch (kind) {
    case SdeKind::kGbm:
      return param("mu") * x;
    case SdeKind::kOu:
      return param("kappa") * (Vec::Constant(x.size(), param("theta")) - x);
    case SdeKind::kCustom:
      return drift_fn(t, x);
  }
  return Vec::Zero(x.size());
}

Mat SdeSpec::diffusion(double t, const Vec& x) const {
  switch (kind) {
    case SdeKind::kGbm:
      return (param("sigma") * x).asDiagonal();
    case SdeKind::kOu:
      return Mat::Identity(x.size(), x.size()) * param("sigma");
    case SdeKind::kCustom:
      return diffusion_fn(t, x);
  }
  return Mat::Zero(x.size(), x.size());
}

Grid Grid::from_horizon(double T, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ConfigError("grid.dt must be positive and finite");
  }
  if (!(T > 0.0) || !std::isfinite(T)) {
    throw ConfigError("grid.T must be positive and finite");
  }
  const double ratio = T / dt;
  const double steps = std::round(ratio);
  if (std::abs(ratio - steps) > 1e-9 * std::max(1.0, ratio) || steps < 1) {
    throw ConfigError("grid.T must be an integer multiple of grid.dt");
  }
  return Grid{dt, static_cast<std::size_t>(steps)};
}

PathDataset::PathDataset(Grid grid, int dim, std::size_t n_paths,
                         std::uint64_t seed)
    : grid_(grid), dim_(dim), seed_(seed), path_ids_(n_paths),
      values_(n_paths * grid.n_points() * static_cast<std::size_t>(dim), 0.0) {
  std::iota(path_ids_.begin(), path_ids_.end(), std::size_t{0});
}

std::vector<double> PathDataset::marginal(GridIndex k, int coord) const {
  std::vector<double> out(n_paths());
  for (std::size_t p = 0; p < n_paths(); ++p) out[p] = at(p, k, coord);
  return out;
}

PathDataset PathDataset::subset(std::span<const std::size_t> rows) const {
  PathDataset out(grid_, dim_, rows.size(), seed_);
  const std::size_t stride = grid_.n_points() * static_cast<std::size_t>(dim_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= n_paths()) throw DataError("subset row out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(r * stride),
                stride,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.path_ids_[i] = path_ids_[r];
  }
  return out;
}

ObservationSequence::ObservationSequence(double dt, std::vector<Observation> obs)
    : dt_(dt), obs_(std::move(obs)) {}

int ObservationSequence::dim() const {
  return obs_.empty() ? 0 : static_cast<int>(obs_.front().values.size());
}

double ObservationSequence::tau(double t) const {
  double last = 0.0;
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    const double ti = time(i);
    if (ti <= t + 1e-12 * dt_) last = ti;
    else break;
  }
  return last;
}

std::size_t ObservationSequence::kappa(double t) const {
  std::size_t count = 0;
  for (std::size_t i = 1; i < obs_.size(); ++i) {
    if (time(i) <= t + 1e-12 * dt_) ++count;
    else break;
  }
  return count;
}

ObservationSequence ObservationSequence::truncated(double t) const {
  std::vector<Observation> kept;
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    if (time(i) <= t + 1e-12 * dt_) kept.push_back(obs_[i]);
  }
  return {dt_, std::move(kept)};
}

std::size_t ObservationSequence::last_at_or_before(GridIndex k) const {
  std::size_t last = 0;
  for (std::size_t i = 0; i < obs_.size() && obs_[i].index <= k; ++i) last = i;
  return last;
}

void ObservationSequence::validate() const {
  if (obs_.empty()) throw DataError("observation sequence is empty");
  if (obs_.front().index != 0) {
    throw DataError("first observation must be at time 0");
  }
  const Eigen::Index d = obs_.front().values.size();
  if ((obs_.front().mask.array() != 1.0).any()) {
    throw DataError("observation at time 0 must be fully observed");
  }
  for (std::size_t i = 0; i < obs_.size(); ++i) {
    const auto& o = obs_[i];
    if (o.values.size() != d || o.mask.size() != d) {
      throw DataError("observation dimension mismatch");
    }
    if (i > 0 && o.index <= obs_[i - 1].index) {
      throw DataError("observation times must be strictly increasing");
    }
    if (((o.mask.array() != 0.0) && (o.mask.array() != 1.0)).any()) {
      throw DataError("observation masks must be binary");
    }
    if (!o.values.allFinite()) throw DataError("observation not finite");
  }
}

namespace {

void check_counts(std::size_t n_paths) {
  if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
}

[[noreturn]] void diverged(std::size_t path, GridIndex step) {
  std::ostringstream msg;
  msg << "simulation diverged on path " << path << " at step " << step;
  throw DivergenceError(msg.str());
}

}  // namespace

PathDataset simulate(const SdeSpec& spec, double T, double dt,
                     std::size_t n_paths, std::uint64_t seed) {
  spec.validate();
  check_counts(n_paths);
  const Grid grid = Grid::from_horizon(T, dt);
  const int d = spec.dim();
  PathDataset ds(grid, d, n_paths, seed);
  const double sqrt_dt = std::sqrt(dt);

  for (std::size_t p = 0; p < n_paths; ++p) {
    Philox4x32 rng = make_stream(seed, StreamDomain::kSimulate, p);
    Vec x = spec.x0;
    ds.point(p, 0) = x;
    for (GridIndex k = 0; k < grid.n_steps; ++k) {
      const double t = grid.time(k);
      const Mat sig = spec.diffusion(t, x);
      Vec next = x + spec.drift(t, x) * dt;
      // A zero loading matrix must reproduce the deterministic iterate
      // bit-for-bit, so noise is only added when present.
      if (!sig.isZero(0.0)) {
        Vec eps(sig.cols());
        for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = rng.normal();
        next += sig * eps * sqrt_dt;
      }
      if (!next.allFinite()) diverged(p, k + 1);
      x = std::move(next);
      ds.point(p, k + 1) = x;
    }
  }
  return ds;
}

PathDataset simulate_exact(const SdeSpec& spec, double T, double dt,
                           std::size_t n_paths, std::uint64_t seed) {
  spec.validate();
  check_counts(n_paths);
  if (spec.kind == SdeKind::kCustom) {
    throw ConfigError("exact sampler only supports gbm and ou");
  }
  const Grid grid = Grid::from_horizon(T, dt);
  const int d = spec.dim();
  PathDataset ds(grid, d, n_paths, seed);

  for (std::size_t p = 0; p < n_paths; ++p) {
    Philox4x32 rng = make_stream(seed, StreamDomain::kSimulate, p);
    Vec x = spec.x0;
    ds.point(p, 0) = x;
    for (GridIndex k = 0; k < grid.n_steps; ++k) {
      for (int j = 0; j < d; ++j) {
        const double eps = rng.normal();
        if (spec.kind == SdeKind::kGbm) {
          const double mu = spec.param("mu");
          const double s = spec.param("sigma");
          x[j] *= std::exp((mu - 0.5 * s * s) * dt + s * std::sqrt(dt) * eps);
        } else {
          const double kappa = spec.param("kappa");
          const double theta = spec.param("theta");
          const double s = spec.param("sigma");
          const double decay = std::exp(-kappa * dt);
          const double sd =
              s * std::sqrt((1.0 - std::exp(-2.0 * kappa * dt)) / (2.0 * kappa));
          x[j] = x[j] * decay + theta * (1.0 - decay) + sd * eps;
        }
      }
      ds.point(p, k + 1) = x;
    }
  }
  return ds;
}

std::vector<ObservationSequence> observe(const PathDataset& ds,
                                         const ObserveOptions& options,
                                         std::uint64_t seed) {
  if (!(options.p >= 0.0 && options.p <= 1.0)) {
    throw ConfigError("observation probability must lie in [0, 1]");
  }
  if (options.coord_p && !(*options.coord_p >= 0.0 && *options.coord_p <= 1.0)) {
    throw ConfigError("coordinate observation probability must lie in [0, 1]");
  }
  const int d = ds.dim();
  const Grid& grid = ds.grid();
  std::vector<ObservationSequence> out;
  out.reserve(ds.n_paths());

  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    Philox4x32 rng = make_stream(seed, StreamDomain::kObserve, ds.path_ids()[p]);
    std::vector<Observation> obs;
    obs.push_back({0, ds.point(p, 0), Vec::Ones(d)});
    for (GridIndex k = 1; k <= grid.n_steps; ++k) {
      if (!(rng.uniform() < options.p)) continue;
      Vec mask = Vec::Ones(d);
      if (options.coord_p) {
        for (int j = 0; j < d; ++j) {
          mask[j] = rng.uniform() < *options.coord_p ? 1.0 : 0.0;
        }
        if (mask.sum() == 0.0) continue;
      }
      obs.push_back({k, ds.point(p, k).cwiseProduct(mask), mask});
    }
    out.emplace_back(grid.dt, std::move(obs));
  }
  return out;
}

SplitIndices split_indices(std::size_t n_paths, double fraction,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("split fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> perm(n_paths);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Philox4x32 rng = make_stream(seed, StreamDomain::kSplit, 0);
  for (std::size_t i = n_paths; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n_paths)));
  SplitIndices out;
  out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.valid.begin(), out.valid.end());
  return out;
}

std::pair<PathDataset, PathDataset> split(const PathDataset& ds,
                                          double fraction, std::uint64_t seed) {
  const SplitIndices idx = split_indices(ds.n_paths(), fraction, seed);
  return {ds.subset(idx.train), ds.subset(idx.valid)};
}

}  // namespace itogen::sim
