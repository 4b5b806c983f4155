#include "itogen/generator.hpp"

#include "itogen/errors.hpp"
#include "itogen/rng.hpp"

#include <json.hpp>

#include <cmath>

namespace itogen::gen {

namespace {

// Values after the last observation, with masked coordinates carried
// forward from earlier observations.
Vec last_imputed(const sim::ObservationSequence& history) {
  const auto& o = history.observations();
  Vec x = o.front().values;
  for (std::size_t i = 1; i < o.size(); ++i) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (o[i].mask[j] != 0.0) x[j] = o[i].values[j];
    }
  }
  return x;
}

bool fully_observed_last(const sim::ObservationSequence& history) {
  return history.observations().back().mask.minCoeff() == 1.0;
}

long steps_for(double span, double step, const char* what) {
  const double r = span / step;
  const long n = std::lround(r);
  if (n < 0 || std::abs(r - static_cast<double>(n)) > 1e-9 * std::max(1.0, r)) {
    throw ConfigError(std::string(what) + " must be a non-negative multiple of the step");
  }
  return n;
}

}  // namespace

AnalyticCoefficients::AnalyticCoefficients(sim::SdeSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

Mat AnalyticCoefficients::begin(const sim::ObservationSequence& history, Eigen::Index n_paths) {
  history.validate();
  if (history.dim() != dim()) throw DataError("history dimension differs from the SDE");
  return last_imputed(history).replicate(1, n_paths);
}

CoefficientBatch AnalyticCoefficients::coefficients(double t, double, const Mat& x) {
  const int d = dim();
  CoefficientBatch out;
  out.mu.resize(d, x.cols());
  out.sigma.resize(d * d, x.cols());
  Mat factor(d * d, x.cols());
  bool square = true;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Vec xj = x.col(j);
    out.mu.col(j) = spec_.drift(t, xj);
    const Mat s = spec_.diffusion(t, xj);
    const Mat sigma = s * s.transpose();
    out.sigma.col(j) = Eigen::Map<const Vec>(sigma.data(), d * d);
    if (s.cols() == d) {
      factor.col(j) = Eigen::Map<const Vec>(s.data(), d * d);
    } else {
      square = false;
    }
  }
  if (square) out.factor = std::move(factor);
  return out;
}

NjodeCoefficients::NjodeCoefficients(const njode::ModelBundle& bundle, double model_dt)
    : bundle_(&bundle) {
  if (bundle.models.empty()) throw ConfigError("empty model bundle");
  if (!(model_dt > 0.0)) throw ConfigError("model dt must be > 0");
  const auto& drift = bundle.drift_model().config();
  const auto& diffusion = bundle.diffusion_model().config();
  if (!drift.drift_head || !diffusion.diffusion_head) {
    throw ConfigError("model bundle does not match scheme " + to_string(bundle.scheme));
  }
  if (drift.arch.substeps != diffusion.arch.substeps) {
    throw ConfigError("drift and diffusion models use different substeps");
  }
  step_ = model_dt / drift.arch.substeps;
}

std::string NjodeCoefficients::describe() const { return "njode:" + to_string(bundle_->scheme); }

void NjodeCoefficients::evolve(njode::BatchState& state, double delta) const {
  const long n = steps_for(delta, step_, "generation step");
  const double t0 = state.time();
  state.evolve(step_, static_cast<int>(n));
  state.set_time(t0 + delta);
}

Mat NjodeCoefficients::begin(const sim::ObservationSequence& history, Eigen::Index n_paths) {
  history.validate();
  const int d = dim();
  if (history.dim() != d) throw DataError("history dimension differs from the model");
  const auto& o = history.observations();
  const double model_dt = step_ * bundle_->drift_model().config().arch.substeps;
  if (o.size() > 1 && std::abs(history.dt() - model_dt) > 1e-12 * model_dt) {
    throw DataError("history grid step differs from the model grid");
  }
  states_.clear();
  evolved_.clear();
  cached_t_ = -1.0;
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(n_paths));
  for (Eigen::Index j = 0; j < n_paths; ++j) cols[static_cast<std::size_t>(j)] = j;
  for (const auto& model : bundle_->models) {
    njode::BatchState state(model, n_paths);
    state.start(o.front().values.replicate(1, n_paths));
    for (std::size_t i = 1; i < o.size(); ++i) {
      evolve(state, history.time(i) - state.time());
      state.set_time(history.time(i));
      state.jump(cols, o[i].values.replicate(1, n_paths), o[i].mask.replicate(1, n_paths));
    }
    states_.push_back(std::move(state));
  }
  Mat x = last_imputed(history).replicate(1, n_paths);
  if (!fully_observed_last(history) && !is_instant(bundle_->scheme)) {
    // Missing coordinates start from the model's conditional expectation.
    const Mat g = states_.front().readout();
    const Vec& m = o.back().mask;
    for (int j = 0; j < d; ++j) {
      if (m[j] == 0.0) x.row(j) = g.row(bundle_->drift_row() + j);
    }
  }
  return x;
}

CoefficientBatch NjodeCoefficients::coefficients(double t, double delta, const Mat& x) {
  const int d = dim();
  const int dd = d * d;
  const bool joint = bundle_->models.size() == 1;
  CoefficientBatch out;
  Mat g_drift;
  Mat g_diff;
  if (is_instant(bundle_->scheme)) {
    g_drift = states_.front().readout();
    g_diff = joint ? g_drift : states_.back().readout();
  } else {
    evolved_ = states_;
    for (auto& s : evolved_) evolve(s, delta);
    cached_t_ = t;
    g_drift = evolved_.front().readout();
    g_diff = joint ? g_drift : evolved_.back().readout();
  }
  const Mat g1 = g_drift.middleRows(bundle_->drift_row(), d);
  const Mat g2 = g_diff.middleRows(bundle_->diffusion_row(), dd);
  out.sigma.resize(dd, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::Map<const Mat> G(g2.col(j).data(), d, d);
    Eigen::Map<Mat> S(out.sigma.col(j).data(), d, d);
    S.noalias() = G * G.transpose();
  }
  if (is_instant(bundle_->scheme)) {
    out.mu = g1;
    out.factor = g2;
  } else {
    out.mu = (g1 - x) / delta;
    out.sigma /= delta;
  }
  return out;
}

void NjodeCoefficients::advance(double t_next, const Mat& x_next) {
  if (!evolved_.empty() && cached_t_ >= 0.0 &&
      std::abs(evolved_.front().time() - t_next) <= 1e-12 * std::max(1.0, t_next)) {
    states_ = std::move(evolved_);
  } else {
    for (auto& s : states_) evolve(s, t_next - s.time());
  }
  evolved_.clear();
  cached_t_ = -1.0;
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(x_next.cols()));
  for (Eigen::Index j = 0; j < x_next.cols(); ++j) cols[static_cast<std::size_t>(j)] = j;
  const Mat ones = Mat::Ones(x_next.rows(), x_next.cols());
  for (auto& s : states_) {
    s.set_time(t_next);
    s.jump(cols, x_next, ones);
  }
}

GenerationResult generate(const SourceFactory& make_source,
                          const sim::ObservationSequence& history,
                          const GenerateOptions& options) {
  history.validate();
  if (!(options.delta > 0.0)) throw ConfigError("generate.delta must be > 0");
  if (!(options.K > 0.0)) throw ConfigError("generate.K must be > 0");
  if (options.n_paths == 0) throw ConfigError("generate.n_paths must be >= 1");
  if (options.batch == 0) throw ConfigError("generate.batch must be >= 1");
  const double t_bar = history.time(history.size() - 1);
  const long k_bar = steps_for(t_bar, options.delta, "history end time");
  const long k_end = steps_for(options.horizon, options.delta, "generate.horizon");
  if (k_end < k_bar) throw ConfigError("generate.horizon precedes the end of the history");
  const auto n_gen = static_cast<std::size_t>(k_end - k_bar);
  const int d = history.dim();
  const std::size_t n = options.n_paths;
  if (options.replay_noise != nullptr &&
      options.replay_noise->size() != n * n_gen * static_cast<std::size_t>(d)) {
    throw ConfigError("replayed noise has the wrong length");
  }

  const sim::Grid grid{options.delta, static_cast<std::size_t>(k_end)};
  sim::PathDataset all(grid, d, n, options.seed);

  // Prefix: last observed value at or before each grid time.
  {
    const auto& o = history.observations();
    Vec x = o.front().values;
    std::size_t next = 1;
    for (long k = 0; k <= k_bar; ++k) {
      const double s = grid.time(static_cast<GridIndex>(k));
      while (next < o.size() && history.time(next) <= s + 1e-12) {
        for (int j = 0; j < d; ++j) {
          if (o[next].mask[j] != 0.0) x[j] = o[next].values[j];
        }
        ++next;
      }
      for (std::size_t p = 0; p < n; ++p) all.point(p, static_cast<GridIndex>(k)) = x;
    }
  }

  GenerationResult result;
  result.start_time = t_bar;
  if (options.record_noise) result.noise.assign(n * n_gen * static_cast<std::size_t>(d), 0.0);
  std::vector<bool> alive(n, true);
  const double sqrt_delta = std::sqrt(options.delta);

  for (std::size_t b0 = 0; b0 < n; b0 += options.batch) {
    const std::size_t nb = std::min(options.batch, n - b0);
    std::unique_ptr<CoefficientSource> source = make_source();
    if (source->dim() != d) throw ConfigError("coefficient source dimension differs from history");
    Mat x = source->begin(history, static_cast<Eigen::Index>(nb));
    std::vector<Philox4x32> rngs;
    rngs.reserve(nb);
    for (std::size_t j = 0; j < nb; ++j) {
      rngs.push_back(make_stream(options.seed, StreamDomain::kGenerate, b0 + j));
      if (!x.col(static_cast<Eigen::Index>(j)).allFinite()) alive[b0 + j] = false;
    }
    auto masked = [&](const Mat& m) {
      Mat out = m;
      for (std::size_t j = 0; j < nb; ++j) {
        if (!alive[b0 + j]) out.col(static_cast<Eigen::Index>(j)).setZero();
      }
      return out;
    };
    x = masked(x);
    for (std::size_t j = 0; j < nb; ++j) {
      all.point(b0 + j, static_cast<GridIndex>(k_bar)) = x.col(static_cast<Eigen::Index>(j));
    }

    for (std::size_t m = 0; m < n_gen; ++m) {
      const double t = grid.time(static_cast<GridIndex>(k_bar) + m);
      const CoefficientBatch cb = source->coefficients(t, options.delta, x);
      Mat x_next = x;
      for (std::size_t j = 0; j < nb; ++j) {
        const std::size_t p = b0 + j;
        const auto c = static_cast<Eigen::Index>(j);
        Vec eps(d);
        for (int i = 0; i < d; ++i) {
          const std::size_t at = (p * n_gen + m) * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
          eps[i] = options.replay_noise != nullptr ? (*options.replay_noise)[at]
                                                   : rngs[j].normal();
          if (options.record_noise) result.noise[at] = eps[i];
        }
        if (!alive[p]) continue;
        if (!cb.mu.col(c).allFinite() || !cb.sigma.col(c).allFinite() ||
            (cb.factor && !cb.factor->col(c).allFinite())) {
          alive[p] = false;
          continue;
        }
        coeff::CoefficientEstimate est;
        est.mu = cb.mu.col(c);
        est.sigma = Eigen::Map<const Mat>(cb.sigma.col(c).data(), d, d);
        est = coeff::truncate(std::move(est), options.K);
        Mat R;
        if (cb.factor && !est.truncated_sigma) {
          R = Eigen::Map<const Mat>(cb.factor->col(c).data(), d, d);
          ++result.stats.model_factor_used;
        } else {
          int clamped = 0;
          R = coeff::psd_sqrt(est.sigma, &clamped);
          result.stats.clamped_eigenvalues += static_cast<std::size_t>(clamped);
        }
        result.stats.truncated_mu += est.truncated_mu ? 1 : 0;
        result.stats.truncated_sigma += est.truncated_sigma ? 1 : 0;
        x_next.col(c) = x.col(c) + est.mu * options.delta + sqrt_delta * (R * eps);
        if (!x_next.col(c).allFinite()) alive[p] = false;
      }
      ++result.stats.steps;
      x = masked(x_next);
      source->advance(t + options.delta, x);
      for (std::size_t j = 0; j < nb; ++j) {
        all.point(b0 + j, static_cast<GridIndex>(k_bar) + m + 1) = x.col(static_cast<Eigen::Index>(j));
      }
    }
  }

  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < n; ++p) {
    if (alive[p]) {
      keep.push_back(p);
    } else {
      result.diverged_ids.push_back(p);
    }
  }
  result.diverged = result.diverged_ids.size();
  result.paths = all.subset(keep);
  return result;
}

GenerationResult generate_from(const SourceFactory& make_source, const Vec& x0,
                               const GenerateOptions& options) {
  const sim::ObservationSequence history(
      options.delta, {sim::Observation{0, x0, Vec::Ones(x0.size())}});
  return generate(make_source, history, options);
}

GenerationResult generate_continuations(const SourceFactory& make_source,
                                        const sim::ObservationSequence& history,
                                        const GenerateOptions& options) {
  return generate(make_source, history, options);
}

void write_generated(const std::filesystem::path& dir, const GenerationResult& result,
                     const io::DatasetMeta& meta, const GenerationMeta& gen_meta) {
  io::write_dataset(dir, result.paths, meta, nullptr);
  nlohmann::json j = {{"scheme", gen_meta.scheme},
                      {"model_checksum", gen_meta.model_checksum},
                      {"delta", gen_meta.delta},
                      {"K", gen_meta.K},
                      {"seed", gen_meta.seed},
                      {"start_time", gen_meta.start_time},
                      {"requested_paths", gen_meta.requested_paths},
                      {"generated_paths", result.paths.n_paths()},
                      {"diverged", gen_meta.diverged}};
  io::write_text_file(dir / "gen_meta.json", j.dump(2) + "\n");
}

}  // namespace itogen::gen
