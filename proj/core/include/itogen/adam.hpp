#pragma once

#include "itogen/tape.hpp"

#include <cstdint>
#include <vector>

namespace itogen::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled: p <- p - lr * weight_decay * p, applied before the Adam step.
  double weight_decay = 5e-4;

  void validate() const;
};

// Adam with bias correction and decoupled weight decay.  Reads gradients
// from Parameter::grad.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // Throws DivergenceError on a non-finite gradient; parameters are left
  // untouched in that case.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::uint64_t steps_ = 0;
};

}  // namespace itogen::nn
