#pragma once

#include "itogen/mlp.hpp"
#include "itogen/path_sim.hpp"
#include "itogen/rng.hpp"
#include "itogen/scheme.hpp"
#include "itogen/tape.hpp"
#include "itogen/types.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace itogen::njode {

// Architecture shared by every network of a model.
struct Architecture {
  int latent_dim = 100;
  int hidden = 50;
  bool recurrent_encoder = true;
  bool residual_encoder = true;
  bool residual_decoder = true;
  // Explicit Euler substeps per data-grid cell.
  int substeps = 1;
  double dropout = 0.1;
  // When > 0 the vector field output is bounded by field_bound * tanh(. / field_bound).
  double field_bound = 0.0;

  bool operator==(const Architecture&) const = default;
};

struct NjodeConfig {
  int dim = 1;
  Architecture arch;
  // Output rows [0, d) carry the X-type prediction G1.
  bool drift_head = true;
  // Output rows [d, d + d*d) (or [0, d*d) without a drift head) carry the
  // factor G2 whose square S = G2 G2ᵀ is the Z-type prediction.
  bool diffusion_head = false;
  // Feed the (identically zero) post-jump Z value to the encoder.
  bool z_input = false;

  int output_dim() const;
  int drift_offset() const { return 0; }
  int diffusion_offset() const { return drift_head ? dim : 0; }
  // [x (d), mask (d), t, t - tau]
  int observation_feature_dim() const { return 2 * dim + 2; }
  int field_input_dim() const { return arch.latent_dim + observation_feature_dim(); }
  int encoder_input_dim() const;

  void validate() const;
  bool operator==(const NjodeConfig&) const = default;
};

// Input-output neural jump ODE:
//   H_0  = rho(0, 0, U_0)
//   dH_t = f(H_{t-}, t, tau(t), U_tau(t)) dt + (rho(H_{t-}, t, U_t) - H_{t-}) dn_t
//   G_t  = g(H_t)
class Njode {
 public:
  Njode() = default;
  Njode(NjodeConfig config, std::string name);

  const NjodeConfig& config() const { return config_; }
  const std::string& name() const { return name_; }

  void init(std::uint64_t seed);
  void set_zero();

  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& field() { return field_; }
  nn::Mlp& decoder() { return decoder_; }
  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& field() const { return field_; }
  const nn::Mlp& decoder() const { return decoder_; }

  // Encoder, vector field, decoder parameters in that order.
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count() const;

 private:
  NjodeConfig config_;
  std::string name_;
  nn::Mlp encoder_;
  nn::Mlp field_;
  nn::Mlp decoder_;
};

// Feature block [x; mask; t; gap] for a batch (rows 2d + 2).
Mat observation_features(const Mat& x, const Mat& mask, double t,
                         const RowVec& gap);

// Latent state of a batch of paths advanced on a common clock, evaluated
// without recording (evaluation mode unless a dropout stream is given).
class BatchState {
 public:
  BatchState(const Njode& model, Eigen::Index batch,
             Philox4x32* dropout_rng = nullptr);

  Eigen::Index batch() const { return latent_.cols(); }
  double time() const { return time_; }

  // H_0 = rho(0, 0, U_0) from fully observed initial values (d x batch).
  void start(const Mat& x0);
  // Explicit Euler steps of size h from the current time.
  void evolve(double h, int steps);
  void set_time(double t) { time_ = t; }
  // Jump the listed columns with masked observations x (d x |cols|).
  void jump(std::span<const Eigen::Index> cols, const Mat& x, const Mat& mask);
  void jump_all(const Mat& x);

  Mat readout() const;
  Mat readout(std::span<const Eigen::Index> cols) const;

  const Mat& latent() const { return latent_; }
  const Mat& last_values() const { return last_x_; }
  const RowVec& last_times() const { return last_t_; }

  // Throws DivergenceError if any latent entry is non-finite.
  void check_finite(const char* where) const;

 private:
  Mat run(const nn::Mlp& net, const Mat& in) const;

  const Njode* model_;
  Philox4x32* dropout_rng_;
  Mat latent_;
  Mat last_x_;
  Mat last_mask_;
  RowVec last_t_;
  double time_ = 0.0;
};

struct JumpRecord {
  std::size_t eval_index = 0;
  double time = 0.0;
  Vec pre;
  Vec post;
};

struct NjodeTrajectory {
  std::vector<double> times;
  // Column k: latent state at times[k] (post-jump at observation times).
  Mat latent;
  // Column k: output G at times[k] (post-jump at observation times).
  Mat outputs;
  std::vector<JumpRecord> jumps;
};

enum class Mode { kTrain, kEval };

// Runs the model along one path on the data grid refined by `substeps`.
// Throws DataError for off-grid observations, DivergenceError for a
// non-finite latent state.
NjodeTrajectory forward(const Njode& model, const sim::ObservationSequence& obs,
                        const sim::Grid& grid, int substeps, Mode mode,
                        std::uint64_t dropout_seed = 0);

struct PredictionWindow {
  std::vector<double> offsets;  // h values, starting at 0
  Mat outputs;                  // column k: G_{s, offsets[k]}
};

// Feeds observations up to s (which must be an observation time), then
// continues the ODE for `horizon` without further jumps.
PredictionWindow predict_window(const Njode& model,
                                const sim::ObservationSequence& obs, double s,
                                double horizon, const sim::Grid& grid,
                                int substeps);

// Decoder outputs at one observation time for the batch columns observed
// there, recorded on a tape.
struct ObservationEvent {
  GridIndex index = 0;
  double time = 0.0;
  std::span<const Eigen::Index> batch_cols;
  nn::Var pre;
  nn::Var post;
};

using EventSink = std::function<void(nn::Tape&, const ObservationEvent&)>;

// Recorded batched forward used for training; calls `sink` once per grid
// time that has at least one observation (excluding t = 0).  Dropout masks
// are drawn from `dropout_rng` when given.
void record_forward(nn::Tape& tape, Njode& model,
                    std::span<const sim::ObservationSequence* const> batch,
                    const sim::Grid& grid, Philox4x32* dropout_rng,
                    const EventSink& sink);

// One or two models implementing a scheme.  Joint schemes use a single
// model with both heads; separate schemes use a drift model and a
// diffusion model.
struct ModelBundle {
  Scheme scheme = Scheme::kJointInstant;
  std::vector<Njode> models;

  static ModelBundle make(Scheme scheme, int dim, const Architecture& arch,
                          std::uint64_t seed);

  int dim() const { return models.front().config().dim; }
  const Njode& drift_model() const { return models.front(); }
  const Njode& diffusion_model() const { return models.back(); }
  Njode& drift_model() { return models.front(); }
  Njode& diffusion_model() { return models.back(); }
  int drift_row() const { return drift_model().config().drift_offset(); }
  int diffusion_row() const { return diffusion_model().config().diffusion_offset(); }
};

}  // namespace itogen::njode
