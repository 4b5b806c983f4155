#include "itogen/tape.hpp"

#include "itogen/errors.hpp"

#include <cmath>
#include <string>

namespace itogen::nn {

Var Tape::push(Mat value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Mat& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  const Mat& x = value(a);
  const Mat& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DataError(std::string("shape mismatch in ") + op + ": " +
                    std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                    " vs " + std::to_string(y.rows()) + "x" +
                    std::to_string(y.cols()));
  }
}

Var Tape::constant(Mat value) { return push(std::move(value), false, {}); }

Var Tape::input(Mat value) { return push(std::move(value), true, [](Tape&, const Mat&) {}); }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  Var v = push(p.value, true, [](Tape&, const Mat&) {});
  nodes_[v.id].param = &p;
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    throw DataError("shape mismatch in matmul: " + std::to_string(value(a).rows()) +
                    "x" + std::to_string(value(a).cols()) + " * " +
                    std::to_string(value(b).rows()) + "x" +
                    std::to_string(value(b).cols()));
  }
  Mat out;
  out.noalias() = value(a) * value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a.id).noalias() += g * t.value(b).transpose();
    if (t.needs(b)) t.grad_ref(b.id).noalias() += t.value(a).transpose() * g;
  });
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a.id) += g;
    if (t.needs(b)) t.grad_ref(b.id) += g;
  });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  return push(value(a) - value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.grad_ref(a.id) += g;
    if (t.needs(b)) t.grad_ref(b.id) -= g;
  });
}

Var Tape::add_bias(Var x, Var bias) {
  if (value(bias).cols() != 1 || value(bias).rows() != value(x).rows()) {
    throw DataError("shape mismatch in add_bias");
  }
  Mat out = value(x).colwise() + value(bias).col(0);
  return push(std::move(out), needs(x) || needs(bias), [x, bias](Tape& t, const Mat& g) {
    if (t.needs(x)) t.grad_ref(x.id) += g;
    if (t.needs(bias)) t.grad_ref(bias.id) += g.rowwise().sum();
  });
}

Var Tape::scale(Var a, double s) {
  return push(value(a) * s, needs(a), [a, s](Tape& t, const Mat& g) {
    t.grad_ref(a.id) += g * s;
  });
}

Var Tape::axpy(Var y, double s, Var x) {
  check_same_shape(y, x, "axpy");
  return push(value(y) + s * value(x), needs(y) || needs(x), [y, s, x](Tape& t, const Mat& g) {
    if (t.needs(y)) t.grad_ref(y.id) += g;
    if (t.needs(x)) t.grad_ref(x.id) += s * g;
  });
}

Var Tape::relu(Var x) {
  Mat out = value(x).cwiseMax(0.0);
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(x), [x, self](Tape& t, const Mat& g) {
    const Mat& y = t.nodes_[self].value;
    t.grad_ref(x.id).array() += (y.array() > 0.0).select(g.array(), 0.0);
  });
}

Var Tape::tanh(Var x) {
  Mat out = value(x).array().tanh().matrix();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(x), [x, self](Tape& t, const Mat& g) {
    const Mat& y = t.nodes_[self].value;
    t.grad_ref(x.id).array() += g.array() * (1.0 - y.array().square());
  });
}

Var Tape::soft_clamp(Var x, double bound) {
  Mat out = (bound * (value(x).array() / bound).tanh()).matrix();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(x), [x, bound, self](Tape& t, const Mat& g) {
    const Mat& y = t.nodes_[self].value;
    t.grad_ref(x.id).array() += g.array() * (1.0 - (y.array() / bound).square());
  });
}

Var Tape::hadamard(Var a, const Mat& constant_factor) {
  if (value(a).rows() != constant_factor.rows() ||
      value(a).cols() != constant_factor.cols()) {
    throw DataError("shape mismatch in hadamard");
  }
  return push(value(a).cwiseProduct(constant_factor), needs(a),
              [a, m = constant_factor](Tape& t, const Mat& g) {
                t.grad_ref(a.id) += g.cwiseProduct(m);
              });
}

Var Tape::hadamard(Var a, Var b) {
  check_same_shape(a, b, "hadamard");
  return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b),
              [a, b](Tape& t, const Mat& g) {
                if (t.needs(a)) t.grad_ref(a.id) += g.cwiseProduct(t.value(b));
                if (t.needs(b)) t.grad_ref(b.id) += g.cwiseProduct(t.value(a));
              });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DataError("concat_rows of nothing");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw DataError("shape mismatch in concat_rows");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, value(p).rows()) = value(p);
    r += value(p).rows();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(std::move(out), any, [ids = std::move(ids)](Tape& t, const Mat& g) {
    Eigen::Index r0 = 0;
    for (Var p : ids) {
      const Eigen::Index n = t.value(p).rows();
      if (t.needs(p)) t.grad_ref(p.id) += g.middleRows(r0, n);
      r0 += n;
    }
  });
}

Var Tape::rows(Var x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > value(x).rows()) {
    throw DataError("row slice out of range");
  }
  return push(value(x).middleRows(begin, count), needs(x),
              [x, begin, count](Tape& t, const Mat& g) {
                t.grad_ref(x.id).middleRows(begin, count) += g;
              });
}

Var Tape::add_rows(Var base, Eigen::Index at, Var part) {
  const Mat& b = value(base);
  const Mat& p = value(part);
  if (at < 0 || at + p.rows() > b.rows() || p.cols() != b.cols()) {
    throw DataError("add_rows: part does not fit");
  }
  Mat out = b;
  out.middleRows(at, p.rows()) += p;
  return push(std::move(out), needs(base) || needs(part),
              [base, at, part](Tape& t, const Mat& g) {
                if (t.needs(base)) t.grad_ref(base.id) += g;
                if (t.needs(part)) t.grad_ref(part.id) += g.middleRows(at, t.value(part).rows());
              });
}

Var Tape::gather_cols(Var x, std::span<const Eigen::Index> cols) {
  const Mat& src = value(x);
  Mat out(src.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = src.col(cols[i]);
  }
  std::vector<Eigen::Index> idx(cols.begin(), cols.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx)](Tape& t, const Mat& g) {
    Mat& gx = t.grad_ref(x.id);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      gx.col(idx[i]) += g.col(static_cast<Eigen::Index>(i));
    }
  });
}

Var Tape::scatter_cols(Var base, std::span<const Eigen::Index> cols, Var update) {
  if (value(base).rows() != value(update).rows() ||
      value(update).cols() != static_cast<Eigen::Index>(cols.size())) {
    throw DataError("shape mismatch in scatter_cols");
  }
  Mat out = value(base);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.col(cols[i]) = value(update).col(static_cast<Eigen::Index>(i));
  }
  std::vector<Eigen::Index> idx(cols.begin(), cols.end());
  return push(std::move(out), needs(base) || needs(update),
              [base, update, idx = std::move(idx)](Tape& t, const Mat& g) {
                if (t.needs(update)) {
                  Mat& gu = t.grad_ref(update.id);
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    gu.col(static_cast<Eigen::Index>(i)) += g.col(idx[i]);
                  }
                }
                if (t.needs(base)) {
                  Mat gb = g;
                  for (Eigen::Index c : idx) gb.col(c).setZero();
                  t.grad_ref(base.id) += gb;
                }
              });
}

Var Tape::self_outer(Var g, int d) {
  const Mat& src = value(g);
  if (src.rows() != static_cast<Eigen::Index>(d) * d) {
    throw DataError("self_outer expects d*d rows");
  }
  Mat out(src.rows(), src.cols());
  for (Eigen::Index c = 0; c < src.cols(); ++c) {
    Eigen::Map<const Mat> G(src.col(c).data(), d, d);
    Eigen::Map<Mat> S(out.col(c).data(), d, d);
    S.noalias() = G * G.transpose();
  }
  return push(std::move(out), needs(g), [g, d](Tape& t, const Mat& go) {
    const Mat& src = t.value(g);
    Mat& gg = t.grad_ref(g.id);
    for (Eigen::Index c = 0; c < src.cols(); ++c) {
      Eigen::Map<const Mat> G(src.col(c).data(), d, d);
      Eigen::Map<const Mat> dS(go.col(c).data(), d, d);
      Eigen::Map<Mat> dG(gg.col(c).data(), d, d);
      dG.noalias() += (dS + dS.transpose()) * G;
    }
  });
}

Var Tape::outer(Var v) {
  const Mat& src = value(v);
  const Eigen::Index d = src.rows();
  Mat out(d * d, src.cols());
  for (Eigen::Index c = 0; c < src.cols(); ++c) {
    Eigen::Map<Mat> S(out.col(c).data(), d, d);
    S.noalias() = src.col(c) * src.col(c).transpose();
  }
  return push(std::move(out), needs(v), [v](Tape& t, const Mat& go) {
    const Mat& src = t.value(v);
    const Eigen::Index d = src.rows();
    Mat& gv = t.grad_ref(v.id);
    for (Eigen::Index c = 0; c < src.cols(); ++c) {
      Eigen::Map<const Mat> dS(go.col(c).data(), d, d);
      gv.col(c).noalias() += (dS + dS.transpose()) * src.col(c);
    }
  });
}

Var Tape::col_norms(Var x) {
  Mat out = value(x).colwise().norm();
  const std::size_t self = nodes_.size();
  return push(std::move(out), needs(x), [x, self](Tape& t, const Mat& g) {
    const Mat& n = t.nodes_[self].value;
    const Mat& src = t.value(x);
    Mat& gx = t.grad_ref(x.id);
    for (Eigen::Index c = 0; c < src.cols(); ++c) {
      if (n(0, c) > 0.0) gx.col(c) += src.col(c) * (g(0, c) / n(0, c));
    }
  });
}

Var Tape::square(Var x) {
  return push(value(x).array().square().matrix(), needs(x), [x](Tape& t, const Mat& g) {
    t.grad_ref(x.id).array() += 2.0 * g.array() * t.value(x).array();
  });
}

Var Tape::weighted_sum(Var x, const Mat& weights) {
  if (value(x).rows() != weights.rows() || value(x).cols() != weights.cols()) {
    throw DataError("shape mismatch in weighted_sum");
  }
  Mat out(1, 1);
  out(0, 0) = value(x).cwiseProduct(weights).sum();
  return push(std::move(out), needs(x), [x, w = weights](Tape& t, const Mat& g) {
    t.grad_ref(x.id) += g(0, 0) * w;
  });
}

Var Tape::sum(std::span<const Var> scalars) {
  Mat out = Mat::Zero(1, 1);
  bool any = false;
  for (Var s : scalars) {
    if (value(s).size() != 1) throw DataError("sum expects scalar nodes");
    out(0, 0) += value(s)(0, 0);
    any = any || needs(s);
  }
  std::vector<Var> ids(scalars.begin(), scalars.end());
  return push(std::move(out), any, [ids = std::move(ids)](Tape& t, const Mat& g) {
    for (Var s : ids) {
      if (t.needs(s)) t.grad_ref(s.id) += g;
    }
  });
}

void Tape::backward(Var loss) {
  if (value(loss).rows() != 1 || value(loss).cols() != 1) {
    throw DataError("backward() requires a scalar loss");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].needs_grad) return;
  grad_ref(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    // Closures only touch grads of earlier nodes, and nodes_ does not grow
    // during backward, so the reference stays valid.
    n.back(*this, n.grad);
  }
}

void Tape::accumulate_param_grads() const {
  for (const Node& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
      n.param->zero_grad();
    }
    n.param->grad += n.grad;
  }
}

Mat Tape::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end() || nodes_[it->second].grad.size() == 0) {
    return Mat::Zero(p.value.rows(), p.value.cols());
  }
  return nodes_[it->second].grad;
}

std::vector<Mat> grad(const std::function<Var(Tape&)>& loss,
                      std::span<Parameter* const> params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (Parameter* p : params) leaves.push_back(tape.param(*p));
  tape.backward(loss(tape));
  std::vector<Mat> out;
  out.reserve(params.size());
  for (Var v : leaves) out.push_back(tape.grad(v));
  return out;
}

}  // namespace itogen::nn
