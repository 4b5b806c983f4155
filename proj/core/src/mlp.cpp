#include "itogen/mlp.hpp"

#include "itogen/errors.hpp"

#include <cmath>

namespace itogen::nn {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kReLU:
      return "relu";
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::kReLU;
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

Mlp::Mlp(MlpConfig config, std::string name)
    : config_(std::move(config)), name_(std::move(name)) {
  if (config_.input_dim < 1 || config_.output_dim < 1) {
    throw ConfigError("network dimensions must be positive");
  }
  int fan_in = config_.input_dim;
  std::vector<int> outs = config_.hidden_dims;
  outs.push_back(config_.output_dim);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (outs[i] < 1) throw ConfigError("hidden widths must be positive");
    const std::string tag = name_ + ".layer" + std::to_string(i);
    weights_.push_back({tag + ".weight", Mat::Zero(outs[i], fan_in), {}});
    biases_.push_back({tag + ".bias", Mat::Zero(outs[i], 1), {}});
    fan_in = outs[i];
  }
  if (config_.skip_width < 0 || config_.skip_offset < 0 ||
      config_.skip_offset + config_.skip_width > config_.input_dim ||
      config_.skip_width > config_.output_dim) {
    throw ConfigError(name_ + ": skip slice does not fit the input or output");
  }
}

void Mlp::init(Philox4x32& rng) {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Mat& w = weights_[i].value;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        w(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
      }
    }
    biases_[i].value.setZero();
  }
}

void Mlp::set_zero() {
  for (Parameter* p : parameters()) p->value.setZero();
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

namespace {

Mat activate(const Mat& x, Activation a) {
  switch (a) {
    case Activation::kReLU:
      return x.cwiseMax(0.0);
    case Activation::kTanh:
      return x.array().tanh().matrix();
    case Activation::kIdentity:
      return x;
  }
  return x;
}

}  // namespace

Mat Mlp::forward(const Mat& x, std::span<const Mat> hidden_masks) const {
  if (x.rows() != config_.input_dim) {
    throw DataError(name_ + ": expected input of dimension " +
                    std::to_string(config_.input_dim) + ", got " +
                    std::to_string(x.rows()));
  }
  if (!hidden_masks.empty() && hidden_masks.size() != n_hidden()) {
    throw DataError(name_ + ": need one dropout mask per hidden layer");
  }
  Mat h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Mat z = weights_[i].value * h;
    z.colwise() += biases_[i].value.col(0);
    if (i + 1 == weights_.size()) {
      h = std::move(z);
      break;
    }
    h = activate(z, config_.activation);
    if (!hidden_masks.empty()) h.array() *= hidden_masks[i].array();
  }
  if (config_.skip_width > 0) {
    h.topRows(config_.skip_width) += x.middleRows(config_.skip_offset, config_.skip_width);
  }
  if (config_.output_bound > 0.0) {
    const double b = config_.output_bound;
    h = (b * (h.array() / b).tanh()).matrix();
  }
  return h;
}

Var Mlp::forward(Tape& tape, Var x, std::span<const Mat> hidden_masks) {
  if (tape.value(x).rows() != config_.input_dim) {
    throw DataError(name_ + ": expected input of dimension " +
                    std::to_string(config_.input_dim) + ", got " +
                    std::to_string(tape.value(x).rows()));
  }
  if (!hidden_masks.empty() && hidden_masks.size() != n_hidden()) {
    throw DataError(name_ + ": need one dropout mask per hidden layer");
  }
  Var h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Var z = tape.add_bias(tape.matmul(tape.param(weights_[i]), h),
                          tape.param(biases_[i]));
    if (i + 1 == weights_.size()) {
      h = z;
      break;
    }
    switch (config_.activation) {
      case Activation::kReLU:
        h = tape.relu(z);
        break;
      case Activation::kTanh:
        h = tape.tanh(z);
        break;
      case Activation::kIdentity:
        h = z;
        break;
    }
    if (!hidden_masks.empty()) h = tape.hadamard(h, hidden_masks[i]);
  }
  if (config_.skip_width > 0) {
    h = tape.add_rows(h, 0, tape.rows(x, config_.skip_offset, config_.skip_width));
  }
  if (config_.output_bound > 0.0) h = tape.soft_clamp(h, config_.output_bound);
  return h;
}

Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                 Philox4x32& rng) {
  Mat m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = rng.uniform() < rate ? 0.0 : keep;
    }
  }
  return m;
}

std::vector<Mat> dropout_masks(const Mlp& mlp, Eigen::Index cols, double rate,
                               Philox4x32& rng) {
  std::vector<Mat> out;
  if (rate <= 0.0) return out;
  for (int width : mlp.config().hidden_dims) {
    out.push_back(dropout_mask(width, cols, rate, rng));
  }
  return out;
}

}  // namespace itogen::nn
