#pragma once

#include "itogen/adam.hpp"
#include "itogen/losses.hpp"
#include "itogen/njode.hpp"
#include "itogen/path_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace itogen::train {

enum class EarlyStop {
  // Best validation epoch, but if it falls before 45% of the run, the best
  // epoch from the second half is used instead.
  kFloor,
  kBest,
  kNone,
};

std::string to_string(EarlyStop e);
EarlyStop early_stop_from_string(const std::string& name);

struct TrainConfig {
  Scheme scheme = Scheme::kJointInstant;
  int epochs = 200;
  int batch_size = 200;
  nn::AdamConfig adam;
  njode::Architecture arch;
  EarlyStop early_stop = EarlyStop::kFloor;
  bool long_term_training = false;
  double long_term_keep_p = 0.1;
  bool stop_gradient = true;
  std::uint64_t seed = 0;
  // Paths per tape; fixed so results do not depend on the thread count.
  int chunk_size = 50;
  int threads = 1;
  bool record_wall_time = true;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double wall_time = 0.0;
};

struct TrainingLog {
  std::string model;
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;  // 0 means the initialization
  double selected_valid_loss = 0.0;
};

struct TrainResult {
  njode::ModelBundle bundle;
  std::vector<TrainingLog> logs;
  loss::TargetDiagnostics diagnostics;
  // 10 x the largest |Z^Q| in the training targets.
  double truncation_level = 0.0;
  std::uint64_t optimizer_steps = 0;
  // Set when a non-finite loss or gradient stopped training early; the
  // bundle then holds the last good parameters.
  bool diverged = false;
  std::string divergence_message;
};

using ProgressFn = std::function<void(const std::string& model, const EpochRecord&)>;

TrainResult train(const TrainConfig& config, const sim::Grid& grid,
                  std::span<const sim::ObservationSequence> train_obs,
                  std::span<const sim::ObservationSequence> valid_obs,
                  const ProgressFn& progress = {});

// Mean loss of a trained unit in evaluation mode.
double evaluate_loss(njode::Njode& model, const loss::LossOptions& options,
                     const sim::Grid& grid,
                     std::span<const sim::ObservationSequence> obs,
                     std::span<const loss::PathTargets> targets, int chunk_size = 50,
                     int threads = 1);

// Keeps each non-initial observation of a dense sequence (one at every
// grid point) with probability keep_p; sequences with gaps pass through.
// Path i draws from stream (seed, stream_offset + i).
std::vector<sim::ObservationSequence> augment_longterm(
    std::span<const sim::ObservationSequence> obs, GridIndex n_steps, double keep_p,
    std::uint64_t seed, std::uint64_t stream_offset = 0);

std::string log_to_csv(const TrainingLog& log);

}  // namespace itogen::train
