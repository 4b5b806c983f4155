#pragma once

#include "itogen/rng.hpp"
#include "itogen/tape.hpp"
#include "itogen/types.hpp"

#include <string>
#include <vector>

namespace itogen::nn {

enum class Activation { kReLU, kIdentity, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpConfig {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  Activation activation = Activation::kReLU;
  // Identity skip: x[skip_offset, skip_offset + skip_width) is added to the
  // first skip_width outputs.  skip_width = 0 disables it.
  int skip_offset = 0;
  int skip_width = 0;
  // When > 0 the output is passed through bound * tanh(y / bound).
  double output_bound = 0.0;

  bool operator==(const MlpConfig&) const = default;
};

// Feedforward network: affine -> activation (-> dropout) per hidden layer,
// then an affine output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpConfig config, std::string name);

  const MlpConfig& config() const { return config_; }
  const std::string& name() const { return name_; }

  // Uniform fan-in initialization U(-b, b), b = 1 / sqrt(fan_in); biases
  // start at zero.  Variance-preserving (He) scaling makes the recurrent
  // encoder expansive, and the latent state explodes over long runs of jumps.
  void init(Philox4x32& rng);
  void set_zero();

  // Weights and biases, in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  std::size_t n_hidden() const { return config_.hidden_dims.size(); }

  // Forward on a batch of column inputs; masks as for the recorded forward.
  Mat forward(const Mat& x, std::span<const Mat> hidden_masks = {}) const;

  // Recorded forward.  `hidden_masks` is either empty (evaluation mode) or
  // holds one multiplicative mask per hidden layer, shaped like that
  // layer's activations.
  Var forward(Tape& tape, Var x, std::span<const Mat> hidden_masks = {});

 private:
  MlpConfig config_;
  std::string name_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

// Inverted dropout mask: entries 0 with probability `rate`, otherwise
// 1 / (1 - rate).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                 Philox4x32& rng);

std::vector<Mat> dropout_masks(const Mlp& mlp, Eigen::Index cols, double rate,
                               Philox4x32& rng);

}  // namespace itogen::nn
