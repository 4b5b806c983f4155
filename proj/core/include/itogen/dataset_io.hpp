#pragma once

#include "itogen/path_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace itogen::io {

// Dataset directory layout:
//   meta.json  spec, T, dt, seed, n_paths, d and the observation settings
//   paths.csv  path_id,time_index,coord_0..coord_{d-1}
//   obs.csv    path_id,time_index,mask_0..mask_{d-1}   (optional)
// Floats are written with 17 significant digits so they round-trip exactly.

struct ObservationMeta {
  double p = 0.1;
  std::optional<double> coord_p;
  std::uint64_t seed = 0;
};

struct DatasetMeta {
  sim::SdeSpec spec;
  double T = 1.0;
  double dt = 0.01;
  std::uint64_t seed = 0;
  std::optional<ObservationMeta> observation;
};

struct LoadedDataset {
  DatasetMeta meta;
  sim::PathDataset paths;
  std::optional<std::vector<sim::ObservationSequence>> observations;
};

std::string format_double(double value);

void write_dataset(const std::filesystem::path& dir, const sim::PathDataset& ds,
                   const DatasetMeta& meta,
                   const std::vector<sim::ObservationSequence>* observations);

LoadedDataset read_dataset(const std::filesystem::path& dir);

// Rebuilds observation sequences from paths plus (path_id, index, mask)
// records; values are taken from the paths and masked.
std::vector<sim::ObservationSequence> observations_from_masks(
    const sim::PathDataset& ds,
    const std::vector<std::vector<std::pair<GridIndex, Vec>>>& masks);

void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

}  // namespace itogen::io
