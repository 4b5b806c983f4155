#pragma once

#include "config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace itogen::cli {

// Stage directories under RunConfig::out.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path model() const { return root / "model"; }
  std::filesystem::path generated() const { return root / "generated"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path plots() const { return root / "plots"; }
  std::filesystem::path manifests() const { return root / "manifests"; }
};

void cmd_simulate(const RunConfig& config, std::ostream& log);
void cmd_train(const RunConfig& config, std::ostream& log);
void cmd_generate(const RunConfig& config, const std::filesystem::path& checkpoint,
                  std::ostream& log);
// With no datasets: the run's reference data against its generated data.
// With two: the first is the reference, the second the candidate.
void cmd_evaluate(const RunConfig& config, const std::vector<std::filesystem::path>& datasets,
                  std::ostream& log);
void cmd_plot(const RunConfig& config, std::ostream& log);

enum class Table { kTable1, kTable2 };
Table table_from_string(const std::string& name);

// Simulate, train every scheme of the table, generate, estimate and render
// the comparison.  scale multiplies path counts and epochs; scale 0 prints
// the plan only.
void cmd_reproduce(const RunConfig& base, Table table, double scale, std::ostream& log);

}  // namespace itogen::cli
