#pragma once

#include "itogen/coeff.hpp"
#include "itogen/dataset_io.hpp"
#include "itogen/njode.hpp"
#include "itogen/path_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace itogen::gen {

// Raw (untruncated) coefficients for a batch of paths.  Column j of `mu`
// is the drift of path j; columns of `sigma` and `factor` hold d x d
// matrices flattened column-major.  `factor`, when present, satisfies
// factor factor^T = sigma and is used while truncation is inactive.
struct CoefficientBatch {
  Mat mu;
  Mat sigma;
  std::optional<Mat> factor;
};

// Supplies coefficient estimates along a growing information sequence.
class CoefficientSource {
 public:
  virtual ~CoefficientSource() = default;
  virtual int dim() const = 0;
  // Conditions every path on `history`; returns the start values (d x n).
  virtual Mat begin(const sim::ObservationSequence& history, Eigen::Index n_paths) = 0;
  // Coefficients at time t for states x (d x n), to be held over [t, t + delta).
  virtual CoefficientBatch coefficients(double t, double delta, const Mat& x) = 0;
  // Appends the fully observed points x_next at t_next.
  virtual void advance(double t_next, const Mat& x_next) = 0;
  virtual std::string describe() const = 0;
};

// Exact coefficients of a known SDE: mu(t, x) and Sigma = sigma sigma^T.
class AnalyticCoefficients final : public CoefficientSource {
 public:
  explicit AnalyticCoefficients(sim::SdeSpec spec);
  int dim() const override { return spec_.dim(); }
  Mat begin(const sim::ObservationSequence& history, Eigen::Index n_paths) override;
  CoefficientBatch coefficients(double t, double delta, const Mat& x) override;
  void advance(double, const Mat&) override {}
  std::string describe() const override { return "analytic"; }

 private:
  sim::SdeSpec spec_;
};

// Coefficients read from trained NJODE models.  Instantaneous schemes read
// the post-jump outputs; baseline schemes evolve the latent state for
// delta and use the quotient estimators with X_t in place of G_{t,0}.
class NjodeCoefficients final : public CoefficientSource {
 public:
  NjodeCoefficients(const njode::ModelBundle& bundle, double model_dt);
  int dim() const override { return bundle_->dim(); }
  Mat begin(const sim::ObservationSequence& history, Eigen::Index n_paths) override;
  CoefficientBatch coefficients(double t, double delta, const Mat& x) override;
  void advance(double t_next, const Mat& x_next) override;
  std::string describe() const override;

 private:
  void evolve(njode::BatchState& state, double delta) const;

  const njode::ModelBundle* bundle_;
  double step_;
  std::vector<njode::BatchState> states_;
  // Latent states evolved by `delta` from `cached_t_` (baseline schemes).
  std::vector<njode::BatchState> evolved_;
  double cached_t_ = -1.0;
};

struct GenerateOptions {
  double delta = 0.01;
  double K = 10.0;
  double horizon = 1.0;  // last generated time
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  std::size_t batch = 500;
  bool record_noise = false;
  // Standard normal draws [path][step][coord]; replaces the RNG when set.
  const std::vector<double>* replay_noise = nullptr;
};

struct GenerationStats {
  std::size_t steps = 0;
  std::size_t truncated_mu = 0;
  std::size_t truncated_sigma = 0;
  std::size_t clamped_eigenvalues = 0;
  std::size_t model_factor_used = 0;
};

struct GenerationResult {
  // Surviving paths on the grid 0, delta, ..., horizon; entries at or before
  // the start time repeat the history (last observed values).
  sim::PathDataset paths;
  double start_time = 0.0;
  std::size_t diverged = 0;
  std::vector<std::size_t> diverged_ids;
  std::vector<double> noise;  // filled when record_noise is set
  GenerationStats stats;
};

// Euler-Maruyama with learned coefficients:
//   X_{t+delta} = X_t + (mu)_K delta + R sqrt(delta) eps,  R R^T = (Sigma)_K.
// `make_source` builds one source per batch of paths; path i draws its noise
// from stream (seed, i).  Non-finite paths are dropped and counted.
using SourceFactory = std::function<std::unique_ptr<CoefficientSource>()>;

GenerationResult generate(const SourceFactory& make_source,
                          const sim::ObservationSequence& history,
                          const GenerateOptions& options);

// Generation from t = 0 for paths starting at x0.
GenerationResult generate_from(const SourceFactory& make_source, const Vec& x0,
                               const GenerateOptions& options);

// Continuations of one history; identical to generate() but named for the
// conditioning contract: all paths share the history prefix.
GenerationResult generate_continuations(const SourceFactory& make_source,
                                        const sim::ObservationSequence& history,
                                        const GenerateOptions& options);

struct GenerationMeta {
  std::string scheme;
  std::string model_checksum;
  double delta = 0.01;
  double K = 0.0;
  std::uint64_t seed = 0;
  double start_time = 0.0;
  std::size_t requested_paths = 0;
  std::size_t diverged = 0;
};

// Dataset directory plus gen_meta.json.
void write_generated(const std::filesystem::path& dir, const GenerationResult& result,
                     const io::DatasetMeta& meta, const GenerationMeta& gen_meta);

}  // namespace itogen::gen
