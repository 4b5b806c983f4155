#pragma once

#include "itogen/generator.hpp"
#include "itogen/path_sim.hpp"
#include "itogen/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace itogen::cli {

struct DataConfig {
  std::size_t n_paths = 20000;
  double train_fraction = 0.8;
  sim::ObserveOptions observation;
};

struct GenerateConfig {
  std::size_t n_paths = 5000;
  double delta = 0.01;
  // Unset: the level stored with the checkpoint.
  std::optional<double> K;
  // Unset: the dataset horizon T.
  std::optional<double> horizon;
  // > 0 generates continuations of one data path observed up to this time.
  double history_end = 0.0;
  std::size_t history_path = 0;
  std::size_t batch = 500;
};

struct EvaluateConfig {
  std::vector<double> times{0.5, 1.0};
  // "train" (the training split) or "all" simulated paths as reference.
  std::string reference = "train";
};

// One document driving every command.  Unknown keys are rejected so typos
// surface as configuration errors.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  int threads = 1;
  sim::SdeSpec sde = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  double T = 1.0;
  double dt = 0.01;
  DataConfig data;
  train::TrainConfig train;
  GenerateConfig generate;
  EvaluateConfig evaluate;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& file);

// Default GBM and OU experiment settings.
RunConfig gbm_defaults();
RunConfig ou_defaults();

}  // namespace itogen::cli
