#include "itogen/losses.hpp"

#include "itogen/errors.hpp"

#include <algorithm>
#include <cmath>

namespace itogen::loss {

PathTargets build_targets(const sim::ObservationSequence& obs, Scheme scheme,
                          TargetDiagnostics* diag) {
  obs.validate();
  const int d = obs.dim();
  const auto dd = static_cast<Eigen::Index>(d) * d;
  PathTargets out;
  out.scheme = scheme;
  out.dim = d;

  const auto& o = obs.observations();
  Vec last_x = o.front().values;
  Vec tau = Vec::Zero(d);
  for (std::size_t i = 1; i < o.size(); ++i) {
    const double t = obs.time(i);
    ObservationTargets tg;
    tg.index = o[i].index;
    tg.time = t;
    tg.x = o[i].values;
    tg.mask = o[i].mask;
    tg.gap = Vec::Constant(d, t) - tau;
    tg.increment = Vec::Zero(d);
    tg.iq = Vec::Zero(d);
    tg.iq_mask = Vec::Zero(d);
    for (int j = 0; j < d; ++j) {
      if (tg.mask[j] == 0.0) continue;
      tg.increment[j] = tg.x[j] - last_x[j];
      if (tg.gap[j] >= kMinGap) {
        tg.iq[j] = tg.increment[j] / tg.gap[j];
        tg.iq_mask[j] = 1.0;
      } else if (diag != nullptr) {
        ++diag->degenerate_gaps;
      }
    }
    tg.z = Vec::Zero(dd);
    tg.zq = Vec::Zero(dd);
    tg.z_mask = Vec::Zero(dd);
    tg.z_post_mask = Vec::Zero(dd);
    tg.zq_mask = Vec::Zero(dd);
    tg.z_gap = Vec::Zero(dd);
    for (int k = 0; k < d; ++k) {
      for (int j = 0; j < d; ++j) {
        const Eigen::Index e = static_cast<Eigen::Index>(k) * d + j;
        if (tg.mask[j] == 0.0 || tg.mask[k] == 0.0) continue;
        tg.z_post_mask[e] = 1.0;
        if (tau[j] != tau[k]) continue;
        tg.z_mask[e] = 1.0;
        tg.z[e] = tg.increment[j] * tg.increment[k];
        if (tg.gap[j] >= kMinGap) {
          tg.zq[e] = tg.z[e] / tg.gap[j];
          tg.zq_mask[e] = 1.0;
          tg.z_gap[e] = tg.gap[j];
        }
      }
    }
    for (int j = 0; j < d; ++j) {
      if (tg.mask[j] == 0.0) continue;
      last_x[j] = tg.x[j];
      tau[j] = t;
    }
    out.obs.push_back(std::move(tg));
  }
  if (out.obs.empty() && diag != nullptr) ++diag->paths_without_observations;
  return out;
}

std::vector<PathTargets> build_targets(std::span<const sim::ObservationSequence> obs,
                                       Scheme scheme, TargetDiagnostics* diag) {
  std::vector<PathTargets> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(build_targets(o, scheme, diag));
  return out;
}

double max_abs_quadratic_quotient(std::span<const PathTargets> targets) {
  double m = 0.0;
  for (const auto& p : targets) {
    for (const auto& o : p.obs) {
      m = std::max(m, o.zq.cwiseProduct(o.zq_mask).cwiseAbs().maxCoeff());
    }
  }
  return m;
}

Vec masked_residual(const Vec& target, const Vec& prediction, const Vec& mask) {
  if (target.size() != prediction.size() || target.size() != mask.size()) {
    throw DataError("residual shapes differ");
  }
  return mask.cwiseProduct(target - prediction);
}

namespace {

template <typename Term>
double path_mean(std::span<const PathResiduals> paths, std::size_t* skipped, Term term) {
  double total = 0.0;
  std::size_t valid = 0;
  std::size_t empty = 0;
  for (const auto& p : paths) {
    const std::size_t n = p.pre.size();
    if (n == 0) {
      ++empty;
      continue;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += term(p, i);
    total += s / static_cast<double>(n);
    ++valid;
  }
  if (skipped != nullptr) *skipped = empty;
  return valid == 0 ? 0.0 : total / static_cast<double>(valid);
}

}  // namespace

double psi(std::span<const PathResiduals> paths, std::size_t* skipped) {
  for (const auto& p : paths) {
    if (p.post.size() != p.pre.size()) throw DataError("psi needs pre and post residuals");
  }
  return path_mean(paths, skipped, [](const PathResiduals& p, std::size_t i) {
    const double a = p.post[i].norm() + p.pre[i].norm();
    return a * a;
  });
}

double psi_noisy(std::span<const PathResiduals> paths, std::size_t* skipped) {
  return path_mean(paths, skipped, [](const PathResiduals& p, std::size_t i) {
    return p.pre[i].squaredNorm();
  });
}

LossRecorder::LossRecorder(const njode::NjodeConfig& model, LossOptions options,
                           std::span<const PathTargets* const> batch,
                           std::size_t valid_total)
    : model_(model), options_(options), batch_(batch.begin(), batch.end()) {
  if (options_.drift && !model_.drift_head) {
    throw ConfigError("drift loss requested for a model without a drift head");
  }
  if (options_.diffusion && !model_.diffusion_head) {
    throw ConfigError("diffusion loss requested for a model without a diffusion head");
  }
  const bool centred = options_.scheme == Scheme::kJointBase ||
                       options_.scheme == Scheme::kJointInstant;
  if (options_.diffusion && centred && !model_.drift_head) {
    throw ConfigError("joint scheme needs the drift head on the same model");
  }
  cursor_.assign(batch_.size(), 0);
  weight_.assign(batch_.size(), 0.0);
  for (const auto* p : batch_) {
    if (p->dim != model_.dim) throw DataError("target dimension differs from the model");
    if (p->scheme != options_.scheme) throw ConfigError("targets were built for another scheme");
    if (p->n() > 0) ++valid_;
  }
  if (valid_total > 0) {
    if (valid_total < valid_) throw DataError("valid path total smaller than the chunk");
    valid_ = valid_total;
  }
  for (std::size_t b = 0; b < batch_.size(); ++b) {
    const std::size_t n = batch_[b]->n();
    if (n > 0) weight_[b] = 1.0 / (static_cast<double>(n) * static_cast<double>(valid_));
  }
}

const ObservationTargets* LossRecorder::take(Eigen::Index col) {
  const auto b = static_cast<std::size_t>(col);
  const auto& obs = batch_.at(b)->obs;
  if (cursor_[b] >= obs.size()) throw DataError("observation event without a target");
  return &obs[cursor_[b]++];
}

void LossRecorder::on_event(nn::Tape& tape, const njode::ObservationEvent& event) {
  const int d = model_.dim;
  const int dd = d * d;
  const auto n = static_cast<Eigen::Index>(event.batch_cols.size());
  std::vector<const ObservationTargets*> tg(static_cast<std::size_t>(n));
  RowVec w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index col = event.batch_cols[static_cast<std::size_t>(i)];
    tg[static_cast<std::size_t>(i)] = take(col);
    if (tg[static_cast<std::size_t>(i)]->index != event.index) {
      throw DataError("observation event does not match its target");
    }
    w[i] = weight_[static_cast<std::size_t>(col)];
  }
  auto gather = [&](auto member, int rows) {
    Mat m(rows, n);
    for (Eigen::Index i = 0; i < n; ++i) m.col(i) = tg[static_cast<std::size_t>(i)]->*member;
    return m;
  };
  // (|post| + |pre|)^2 weighted per column.
  auto standard = [&](nn::Var r_post, nn::Var r_pre) {
    nn::Var s = tape.add(tape.col_norms(r_post), tape.col_norms(r_pre));
    terms_.push_back(tape.weighted_sum(tape.square(s), w));
  };
  // |pre|^2 weighted per column.
  auto noisy = [&](nn::Var r_pre, int rows) {
    Mat wm = w.replicate(rows, 1);
    terms_.push_back(tape.weighted_sum(tape.square(r_pre), wm));
  };
  const bool instant = is_instant(options_.scheme);
  nn::Var g1_pre;
  if (model_.drift_head) g1_pre = tape.rows(event.pre, model_.drift_offset(), d);

  if (options_.drift) {
    if (instant) {
      const Mat iq_mask = gather(&ObservationTargets::iq_mask, d);
      nn::Var r = tape.hadamard(tape.sub(tape.constant(gather(&ObservationTargets::iq, d)), g1_pre),
                                iq_mask);
      noisy(r, d);
    } else {
      const Mat x = gather(&ObservationTargets::x, d);
      const Mat mask = gather(&ObservationTargets::mask, d);
      nn::Var g1_post = tape.rows(event.post, model_.drift_offset(), d);
      nn::Var r_pre = tape.hadamard(tape.sub(tape.constant(x), g1_pre), mask);
      nn::Var r_post = tape.hadamard(tape.sub(tape.constant(x), g1_post), mask);
      standard(r_post, r_pre);
    }
  }

  if (!options_.diffusion) return;
  const int off = model_.diffusion_offset();
  nn::Var s_pre = tape.self_outer(tape.rows(event.pre, off, dd), d);
  nn::Var g1_centre;
  if (options_.scheme == Scheme::kJointBase || options_.scheme == Scheme::kJointInstant) {
    g1_centre = options_.stop_gradient ? tape.stop_gradient(g1_pre) : g1_pre;
  }
  switch (options_.scheme) {
    case Scheme::kBase:
    case Scheme::kJointBase: {
      nn::Var target;
      if (options_.scheme == Scheme::kBase) {
        target = tape.constant(gather(&ObservationTargets::z, dd));
      } else {
        nn::Var c = tape.sub(tape.constant(gather(&ObservationTargets::x, d)), g1_centre);
        target = tape.outer(c);
      }
      nn::Var s_post = tape.self_outer(tape.rows(event.post, off, dd), d);
      nn::Var r_pre =
          tape.hadamard(tape.sub(target, s_pre), gather(&ObservationTargets::z_mask, dd));
      nn::Var r_post =
          tape.hadamard(tape.scale(s_post, -1.0), gather(&ObservationTargets::z_post_mask, dd));
      standard(r_post, r_pre);
      break;
    }
    case Scheme::kInstant:
    case Scheme::kJointInstant: {
      nn::Var target;
      if (options_.scheme == Scheme::kInstant) {
        target = tape.constant(gather(&ObservationTargets::zq, dd));
      } else {
        nn::Var c = tape.sub(tape.constant(gather(&ObservationTargets::iq, d)), g1_centre);
        target = tape.hadamard(tape.outer(c), gather(&ObservationTargets::z_gap, dd));
      }
      nn::Var r_pre =
          tape.hadamard(tape.sub(target, s_pre), gather(&ObservationTargets::zq_mask, dd));
      noisy(r_pre, dd);
      break;
    }
  }
}

nn::Var LossRecorder::total(nn::Tape& tape) const {
  if (terms_.empty()) return tape.constant(Mat::Zero(1, 1));
  return tape.sum(terms_);
}

nn::Var batch_loss(nn::Tape& tape, njode::Njode& model, const LossOptions& options,
                   std::span<const sim::ObservationSequence* const> obs,
                   std::span<const PathTargets* const> targets, const sim::Grid& grid,
                   Philox4x32* dropout_rng, std::size_t valid_total) {
  if (obs.size() != targets.size()) throw DataError("observation and target batches differ");
  LossRecorder recorder(model.config(), options, targets, valid_total);
  njode::record_forward(tape, model, obs, grid, dropout_rng,
                        [&](nn::Tape& t, const njode::ObservationEvent& e) {
                          recorder.on_event(t, e);
                        });
  return recorder.total(tape);
}

}  // namespace itogen::loss
