#pragma once

#include "itogen/eval.hpp"
#include "itogen/path_sim.hpp"

#include <string>
#include <vector>

namespace itogen::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Line chart; series are drawn in order with a fixed palette.
std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label);

// First `max_paths` paths of coordinate `coord`.
std::string path_overlay(const sim::PathDataset& ds, std::size_t max_paths,
                         const std::string& title, int coord = 0);

// Shared-bin density histograms of one marginal comparison.
std::string marginal_histogram(const eval::MarginalComparison& c,
                               const std::string& label_a, const std::string& label_b);

}  // namespace itogen::svg
