#include "itogen/njode.hpp"

#include "itogen/errors.hpp"

#include <cmath>
#include <sstream>

namespace itogen {

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kBase:
      return "base";
    case Scheme::kJointBase:
      return "joint-base";
    case Scheme::kInstant:
      return "instant";
    case Scheme::kJointInstant:
      return "joint-instant";
  }
  return "unknown";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "base") return Scheme::kBase;
  if (name == "joint-base") return Scheme::kJointBase;
  if (name == "instant") return Scheme::kInstant;
  if (name == "joint-instant") return Scheme::kJointInstant;
  throw ConfigError("unknown scheme '" + name +
                    "' (expected base, joint-base, instant, joint-instant)");
}

}  // namespace itogen

namespace itogen::njode {

int NjodeConfig::output_dim() const {
  return (drift_head ? dim : 0) + (diffusion_head ? dim * dim : 0);
}

int NjodeConfig::encoder_input_dim() const {
  return (arch.recurrent_encoder ? arch.latent_dim : 0) + observation_feature_dim() +
         (z_input ? dim * dim : 0);
}

void NjodeConfig::validate() const {
  if (dim < 1) throw ConfigError("model dimension must be >= 1");
  if (arch.latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
  if (arch.hidden < 1) throw ConfigError("model.hidden must be >= 1");
  if (arch.substeps < 1) throw ConfigError("model.substeps must be >= 1");
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) {
    throw ConfigError("train.dropout must lie in [0, 1)");
  }
  if (!(arch.field_bound >= 0.0)) throw ConfigError("model.field_bound must be >= 0");
  if (!drift_head && !diffusion_head) throw ConfigError("model needs at least one head");
}

Njode::Njode(NjodeConfig config, std::string name)
    : config_(std::move(config)), name_(std::move(name)) {
  config_.validate();
  const Architecture& a = config_.arch;
  // Residual encoder: the observed values are copied into the first latent
  // coordinates, never H_{t-}, so repeated jumps cannot compound a gain.
  const int enc_skip_at = a.recurrent_encoder ? a.latent_dim : 0;
  const int enc_skip = a.residual_encoder ? std::min(config_.dim, a.latent_dim) : 0;
  // Residual decoder: the first latent coordinates are added to the output.
  const int dec_skip = a.residual_decoder ? std::min(config_.output_dim(), a.latent_dim) : 0;
  encoder_ = nn::Mlp({config_.encoder_input_dim(), {a.hidden}, a.latent_dim,
                      nn::Activation::kReLU, enc_skip_at, enc_skip, 0.0},
                     name_ + ".encoder");
  field_ = nn::Mlp({config_.field_input_dim(), {a.hidden}, a.latent_dim,
                    nn::Activation::kReLU, 0, 0, a.field_bound},
                   name_ + ".field");
  decoder_ = nn::Mlp({a.latent_dim, {a.hidden}, config_.output_dim(),
                      nn::Activation::kReLU, 0, dec_skip, 0.0},
                     name_ + ".decoder");
}

void Njode::init(std::uint64_t seed) {
  std::uint64_t tag = 1469598103934665603ull;
  for (char c : name_) tag = (tag ^ static_cast<unsigned char>(c)) * 1099511628211ull;
  Philox4x32 rng = make_stream(seed, StreamDomain::kInit, tag);
  encoder_.init(rng);
  field_.init(rng);
  decoder_.init(rng);
}

void Njode::set_zero() {
  encoder_.set_zero();
  field_.set_zero();
  decoder_.set_zero();
}

std::vector<nn::Parameter*> Njode::parameters() {
  std::vector<nn::Parameter*> out = encoder_.parameters();
  for (auto* p : field_.parameters()) out.push_back(p);
  for (auto* p : decoder_.parameters()) out.push_back(p);
  return out;
}

std::vector<const nn::Parameter*> Njode::parameters() const {
  std::vector<const nn::Parameter*> out = encoder_.parameters();
  for (auto* p : field_.parameters()) out.push_back(p);
  for (auto* p : decoder_.parameters()) out.push_back(p);
  return out;
}

std::size_t Njode::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Mat observation_features(const Mat& x, const Mat& mask, double t,
                         const RowVec& gap) {
  const Eigen::Index d = x.rows();
  Mat out(2 * d + 2, x.cols());
  out.topRows(d) = x;
  out.middleRows(d, d) = mask;
  out.row(2 * d).setConstant(t);
  out.row(2 * d + 1) = gap;
  return out;
}

BatchState::BatchState(const Njode& model, Eigen::Index batch,
                       Philox4x32* dropout_rng)
    : model_(&model), dropout_rng_(dropout_rng) {
  const NjodeConfig& c = model.config();
  latent_ = Mat::Zero(c.arch.latent_dim, batch);
  last_x_ = Mat::Zero(c.dim, batch);
  last_mask_ = Mat::Ones(c.dim, batch);
  last_t_ = RowVec::Zero(batch);
}

Mat BatchState::run(const nn::Mlp& net, const Mat& in) const {
  if (dropout_rng_ == nullptr || model_->config().arch.dropout <= 0.0) {
    return net.forward(in);
  }
  const auto masks =
      nn::dropout_masks(net, in.cols(), model_->config().arch.dropout, *dropout_rng_);
  return net.forward(in, masks);
}

namespace {

Mat encoder_input(const NjodeConfig& c, const Mat& h_pre, const Mat& x,
                  const Mat& mask, double t, const RowVec& gap) {
  const Eigen::Index cols = x.cols();
  Mat in(c.encoder_input_dim(), cols);
  Eigen::Index r = 0;
  if (c.arch.recurrent_encoder) {
    in.topRows(c.arch.latent_dim) = h_pre;
    r = c.arch.latent_dim;
  }
  in.middleRows(r, c.observation_feature_dim()) = observation_features(x, mask, t, gap);
  r += c.observation_feature_dim();
  if (c.z_input) in.bottomRows(c.dim * c.dim).setZero();
  return in;
}

}  // namespace

void BatchState::start(const Mat& x0) {
  const NjodeConfig& c = model_->config();
  if (x0.rows() != c.dim || x0.cols() != batch()) {
    throw DataError("initial values have the wrong shape");
  }
  last_x_ = x0;
  last_mask_ = Mat::Ones(c.dim, batch());
  last_t_.setZero();
  time_ = 0.0;
  const Mat zero_h = Mat::Zero(c.arch.latent_dim, batch());
  latent_ = run(model_->encoder(),
                encoder_input(c, zero_h, x0, last_mask_, 0.0, RowVec::Zero(batch())));
  check_finite("start");
}

void BatchState::evolve(double h, int steps) {
  const NjodeConfig& c = model_->config();
  const double t0 = time_;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + h * s;
    Mat in(c.field_input_dim(), batch());
    in.topRows(c.arch.latent_dim) = latent_;
    RowVec gap = RowVec::Constant(batch(), t) - last_t_;
    in.bottomRows(c.observation_feature_dim()) =
        observation_features(last_x_, last_mask_, t, gap);
    latent_ += h * run(model_->field(), in);
  }
  time_ = t0 + h * steps;
}

void BatchState::jump(std::span<const Eigen::Index> cols, const Mat& x,
                      const Mat& mask) {
  if (cols.empty()) return;
  const NjodeConfig& c = model_->config();
  const auto n = static_cast<Eigen::Index>(cols.size());
  Mat h_pre(c.arch.latent_dim, n);
  Mat x_imp(c.dim, n);
  RowVec gap(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index col = cols[static_cast<std::size_t>(i)];
    h_pre.col(i) = latent_.col(col);
    x_imp.col(i) = mask.col(i).cwiseProduct(x.col(i)) +
                   (Vec::Ones(c.dim) - mask.col(i)).cwiseProduct(last_x_.col(col));
    gap[i] = time_ - last_t_[col];
  }
  const Mat h_post = run(model_->encoder(), encoder_input(c, h_pre, x_imp, mask, time_, gap));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index col = cols[static_cast<std::size_t>(i)];
    latent_.col(col) = h_post.col(i);
    last_x_.col(col) = x_imp.col(i);
    last_mask_.col(col) = mask.col(i);
    last_t_[col] = time_;
  }
}

void BatchState::jump_all(const Mat& x) {
  std::vector<Eigen::Index> cols(static_cast<std::size_t>(batch()));
  for (Eigen::Index i = 0; i < batch(); ++i) cols[static_cast<std::size_t>(i)] = i;
  jump(cols, x, Mat::Ones(x.rows(), x.cols()));
}

Mat BatchState::readout() const { return run(model_->decoder(), latent_); }

Mat BatchState::readout(std::span<const Eigen::Index> cols) const {
  Mat h(latent_.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    h.col(static_cast<Eigen::Index>(i)) = latent_.col(cols[i]);
  }
  return run(model_->decoder(), h);
}

void BatchState::check_finite(const char* where) const {
  if (latent_.allFinite()) return;
  std::ostringstream msg;
  msg << "non-finite latent state (" << where << ") at t = " << time_;
  throw DivergenceError(msg.str());
}

namespace {

void check_on_grid(const sim::ObservationSequence& obs, const sim::Grid& grid) {
  obs.validate();
  if (std::abs(obs.dt() - grid.dt) > 1e-12 * grid.dt) {
    throw DataError("observation grid step differs from the model grid");
  }
  for (const auto& o : obs.observations()) {
    if (o.index > grid.n_steps) throw DataError("observation time beyond the grid");
  }
}

}  // namespace

NjodeTrajectory forward(const Njode& model, const sim::ObservationSequence& obs,
                        const sim::Grid& grid, int substeps, Mode mode,
                        std::uint64_t dropout_seed) {
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  check_on_grid(obs, grid);
  std::optional<Philox4x32> rng;
  if (mode == Mode::kTrain) rng.emplace(make_stream(dropout_seed, StreamDomain::kDropout, 0));
  BatchState state(model, 1, rng ? &*rng : nullptr);

  const auto& o = obs.observations();
  const std::size_t n_eval = grid.n_steps * static_cast<std::size_t>(substeps) + 1;
  const double h = grid.dt / substeps;
  NjodeTrajectory traj;
  traj.times.resize(n_eval);
  traj.latent.resize(model.config().arch.latent_dim, static_cast<Eigen::Index>(n_eval));
  traj.outputs.resize(model.config().output_dim(), static_cast<Eigen::Index>(n_eval));

  state.start(o.front().values);
  traj.times[0] = 0.0;
  traj.latent.col(0) = state.latent().col(0);
  traj.outputs.col(0) = state.readout().col(0);
  std::size_t next = 1;
  const std::array<Eigen::Index, 1> col0{0};

  for (GridIndex k = 0; k < grid.n_steps; ++k) {
    for (int s = 1; s <= substeps; ++s) {
      const std::size_t e = k * static_cast<std::size_t>(substeps) + static_cast<std::size_t>(s);
      state.set_time(grid.time(k) + h * (s - 1));
      state.evolve(h, 1);
      // Jumps happen exactly at index * dt.
      if (s == substeps) state.set_time(grid.time(k + 1));
      state.check_finite("ode step");
      traj.times[e] = grid.time(k) + h * s;
      if (s == substeps && next < o.size() && o[next].index == k + 1) {
        JumpRecord rec;
        rec.eval_index = e;
        rec.time = grid.time(k + 1);
        rec.pre = state.readout().col(0);
        state.jump(col0, o[next].values, o[next].mask);
        state.check_finite("jump");
        rec.post = state.readout().col(0);
        traj.jumps.push_back(std::move(rec));
        ++next;
      }
      traj.latent.col(static_cast<Eigen::Index>(e)) = state.latent().col(0);
      traj.outputs.col(static_cast<Eigen::Index>(e)) = state.readout().col(0);
    }
  }
  return traj;
}

PredictionWindow predict_window(const Njode& model,
                                const sim::ObservationSequence& obs, double s,
                                double horizon, const sim::Grid& grid,
                                int substeps) {
  if (substeps < 1) throw ConfigError("substeps must be >= 1");
  check_on_grid(obs, grid);
  if (horizon < 0.0) throw ConfigError("prediction horizon must be >= 0");
  if (s + horizon > grid.horizon() + 1e-12) {
    throw ConfigError("prediction window exceeds the time horizon");
  }
  const auto s_index = static_cast<GridIndex>(std::llround(s / grid.dt));
  const sim::ObservationSequence past = obs.truncated(s);
  if (past.observations().back().index != s_index ||
      std::abs(grid.time(s_index) - s) > 1e-9 * grid.dt) {
    throw ConfigError("prediction start must be an observation time");
  }
  const double h = grid.dt / substeps;
  const double n_real = horizon / h;
  const auto n = static_cast<long>(std::llround(n_real));
  if (std::abs(n_real - static_cast<double>(n)) > 1e-9 * std::max(1.0, n_real)) {
    throw ConfigError("prediction horizon must be a multiple of the ODE step");
  }

  BatchState state(model, 1);
  const auto& o = past.observations();
  state.start(o.front().values);
  const std::array<Eigen::Index, 1> col0{0};
  std::size_t next = 1;
  for (GridIndex k = 0; k < s_index; ++k) {
    state.set_time(grid.time(k));
    state.evolve(h, substeps);
    state.set_time(grid.time(k + 1));
    state.check_finite("ode step");
    if (next < o.size() && o[next].index == k + 1) {
      state.jump(col0, o[next].values, o[next].mask);
      state.check_finite("jump");
      ++next;
    }
  }

  PredictionWindow w;
  w.outputs.resize(model.config().output_dim(), n + 1);
  w.offsets.push_back(0.0);
  w.outputs.col(0) = state.readout().col(0);
  for (long i = 1; i <= n; ++i) {
    state.evolve(h, 1);
    state.check_finite("ode step");
    w.offsets.push_back(h * static_cast<double>(i));
    w.outputs.col(i) = state.readout().col(0);
  }
  return w;
}

void record_forward(nn::Tape& tape, Njode& model,
                    std::span<const sim::ObservationSequence* const> batch,
                    const sim::Grid& grid, Philox4x32* dropout_rng,
                    const EventSink& sink) {
  const NjodeConfig& c = model.config();
  const int d = c.dim;
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) return;
  const double rate = dropout_rng != nullptr ? c.arch.dropout : 0.0;
  auto masks_for = [&](const nn::Mlp& net, Eigen::Index cols) {
    return rate > 0.0 ? nn::dropout_masks(net, cols, rate, *dropout_rng)
                      : std::vector<Mat>{};
  };
  auto encoder_in = [&](nn::Var h_pre, const Mat& x, const Mat& mask, double t,
                        const RowVec& gap) {
    std::vector<nn::Var> parts;
    if (c.arch.recurrent_encoder) parts.push_back(h_pre);
    parts.push_back(tape.constant(observation_features(x, mask, t, gap)));
    if (c.z_input) parts.push_back(tape.constant(Mat::Zero(d * d, x.cols())));
    return tape.concat_rows(parts);
  };

  Mat last_x(d, B);
  Mat last_mask = Mat::Ones(d, B);
  RowVec last_t = RowVec::Zero(B);
  std::vector<std::size_t> cursor(static_cast<std::size_t>(B), 1);
  for (Eigen::Index b = 0; b < B; ++b) {
    const auto& seq = *batch[static_cast<std::size_t>(b)];
    check_on_grid(seq, grid);
    last_x.col(b) = seq.observations().front().values;
  }

  nn::Var h;
  {
    nn::Var in = encoder_in(tape.constant(Mat::Zero(c.arch.latent_dim, B)), last_x,
                            last_mask, 0.0, RowVec::Zero(B));
    h = model.encoder().forward(tape, in, masks_for(model.encoder(), B));
  }

  const int ns = c.arch.substeps;
  const double step = grid.dt / ns;
  std::vector<Eigen::Index> cols;
  for (GridIndex k = 0; k < grid.n_steps; ++k) {
    for (int s = 0; s < ns; ++s) {
      const double t = grid.time(k) + step * s;
      const RowVec gap = RowVec::Constant(B, t) - last_t;
      std::array<nn::Var, 2> parts{
          h, tape.constant(observation_features(last_x, last_mask, t, gap))};
      nn::Var f = model.field().forward(tape, tape.concat_rows(parts),
                                        masks_for(model.field(), B));
      h = tape.axpy(h, step, f);
    }
    if (!tape.value(h).allFinite()) {
      std::ostringstream msg;
      msg << "non-finite latent state during training at t = " << grid.time(k + 1);
      throw DivergenceError(msg.str());
    }

    cols.clear();
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& o = batch[static_cast<std::size_t>(b)]->observations();
      const std::size_t i = cursor[static_cast<std::size_t>(b)];
      if (i < o.size() && o[i].index == k + 1) cols.push_back(b);
    }
    if (cols.empty()) continue;

    const double t = grid.time(k + 1);
    const auto n = static_cast<Eigen::Index>(cols.size());
    Mat x(d, n);
    Mat mask(d, n);
    RowVec gap(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index b = cols[static_cast<std::size_t>(i)];
      const auto& ob = batch[static_cast<std::size_t>(b)]->observations()[cursor[static_cast<std::size_t>(b)]];
      mask.col(i) = ob.mask;
      x.col(i) = ob.mask.cwiseProduct(ob.values) +
                 (Vec::Ones(d) - ob.mask).cwiseProduct(last_x.col(b));
      gap[i] = t - last_t[b];
    }

    nn::Var h_pre = tape.gather_cols(h, cols);
    nn::Var g_pre = model.decoder().forward(tape, h_pre, masks_for(model.decoder(), n));
    nn::Var h_post = model.encoder().forward(tape, encoder_in(h_pre, x, mask, t, gap),
                                             masks_for(model.encoder(), n));
    nn::Var g_post = model.decoder().forward(tape, h_post, masks_for(model.decoder(), n));
    h = tape.scatter_cols(h, cols, h_post);

    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index b = cols[static_cast<std::size_t>(i)];
      last_x.col(b) = x.col(i);
      last_mask.col(b) = mask.col(i);
      last_t[b] = t;
      ++cursor[static_cast<std::size_t>(b)];
    }
    sink(tape, ObservationEvent{k + 1, t, cols, g_pre, g_post});
  }
}

ModelBundle ModelBundle::make(Scheme scheme, int dim, const Architecture& arch,
                              std::uint64_t seed) {
  ModelBundle b;
  b.scheme = scheme;
  if (is_joint(scheme)) {
    NjodeConfig c{dim, arch, true, true, true};
    b.models.emplace_back(c, "joint");
  } else {
    NjodeConfig drift{dim, arch, true, false, false};
    NjodeConfig diffusion{dim, arch, false, true, true};
    b.models.emplace_back(drift, "drift");
    b.models.emplace_back(diffusion, "diffusion");
  }
  for (Njode& m : b.models) m.init(seed);
  return b;
}

}  // namespace itogen::njode
