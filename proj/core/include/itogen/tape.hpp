#pragma once

#include "itogen/types.hpp"

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace itogen::nn {

// A trainable matrix together with its gradient accumulator.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

// Reverse-mode automatic differentiation over matrix-valued nodes.
//
// Columns index independent samples (paths) throughout, so one tape records
// the computation for a whole mini-batch.  Nodes are appended in evaluation
// order, which is a topological order; backward() walks it in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  // Leaf whose gradient is retained (used by tests and finite-difference
  // checks on inputs).
  Var input(Mat value);
  // Leaf bound to a Parameter; one node per Parameter per tape.
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() target with respect to v; zero matrix
  // if v did not influence it.
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  // x plus a column vector broadcast across columns.
  Var add_bias(Var x, Var bias);
  Var scale(Var a, double s);
  // y + s * x
  Var axpy(Var y, double s, Var x);
  Var relu(Var x);
  Var tanh(Var x);
  // bound * tanh(x / bound)
  Var soft_clamp(Var x, double bound);
  Var hadamard(Var a, const Mat& constant_factor);
  Var hadamard(Var a, Var b);
  Var concat_rows(std::span<const Var> parts);
  Var rows(Var x, Eigen::Index begin, Eigen::Index count);
  // base with part added to rows [at, at + part.rows()).
  Var add_rows(Var base, Eigen::Index at, Var part);
  Var gather_cols(Var x, std::span<const Eigen::Index> cols);
  // Copy of `base` with the listed columns replaced by those of `update`.
  Var scatter_cols(Var base, std::span<const Eigen::Index> cols, Var update);
  // Column-wise G Gᵀ where each column holds a d x d matrix G in
  // column-major order.  Output has d*d rows.
  Var self_outer(Var g, int d);
  // Column-wise v vᵀ (d*d rows, column-major).
  Var outer(Var v);
  // Row vector of Euclidean column norms.  The subgradient at a zero column
  // is taken as zero.
  Var col_norms(Var x);
  Var square(Var x);
  // Scalar sum_ij w_ij x_ij.
  Var weighted_sum(Var x, const Mat& weights);
  Var sum(std::span<const Var> scalars);
  // Same value, no gradient flow.
  Var stop_gradient(Var x) { return constant(value(x)); }

  // Propagates d loss / d node for every node.  `loss` must be 1 x 1.
  void backward(Var loss);
  // Adds parameter gradients from the last backward() into Parameter::grad.
  void accumulate_param_grads() const;
  // Gradient for one parameter from the last backward(); zero if unused.
  Mat param_grad(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  struct Node {
    Mat value;
    Mat grad;
    Backward back;
    bool needs_grad = false;
    Parameter* param = nullptr;
  };

  Var push(Mat value, bool needs_grad, Backward back);
  Mat& grad_ref(std::size_t id);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  void check_same_shape(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// Gradient of a scalar loss built on a fresh tape, one matrix per parameter.
std::vector<Mat> grad(const std::function<Var(Tape&)>& loss,
                      std::span<Parameter* const> params);

}  // namespace itogen::nn
