#include "itogen/trainer.hpp"

#include "itogen/dataset_io.hpp"
#include "itogen/errors.hpp"
#include "itogen/parallel.hpp"
#include "itogen/rng.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace itogen::train {

std::string to_string(EarlyStop e) {
  switch (e) {
    case EarlyStop::kFloor:
      return "floor";
    case EarlyStop::kBest:
      return "best";
    case EarlyStop::kNone:
      return "none";
  }
  return "unknown";
}

EarlyStop early_stop_from_string(const std::string& name) {
  if (name == "floor") return EarlyStop::kFloor;
  if (name == "best") return EarlyStop::kBest;
  if (name == "none") return EarlyStop::kNone;
  throw ConfigError("unknown early_stop policy '" + name + "' (expected floor, best, none)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (chunk_size < 1) throw ConfigError("train.chunk_size must be >= 1");
  if (!(long_term_keep_p >= 0.0 && long_term_keep_p <= 1.0)) {
    throw ConfigError("train.long_term_keep_p must lie in [0, 1]");
  }
  adam.validate();
  njode::NjodeConfig probe{1, arch, true, true, true};
  probe.validate();
}

std::vector<sim::ObservationSequence> augment_longterm(
    std::span<const sim::ObservationSequence> obs, GridIndex n_steps, double keep_p,
    std::uint64_t seed, std::uint64_t stream_offset) {
  std::vector<sim::ObservationSequence> out;
  out.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& seq = obs[i];
    if (seq.size() != n_steps + 1) {
      out.push_back(seq);
      continue;
    }
    Philox4x32 rng = make_stream(seed, StreamDomain::kAugment, stream_offset + i);
    std::vector<sim::Observation> kept{seq.observations().front()};
    for (std::size_t k = 1; k < seq.size(); ++k) {
      if (rng.uniform() < keep_p) kept.push_back(seq.observations()[k]);
    }
    out.emplace_back(seq.dt(), std::move(kept));
  }
  return out;
}

std::string log_to_csv(const TrainingLog& log) {
  std::ostringstream out;
  out << "epoch,train_loss,valid_loss,wall_time\n";
  for (const auto& r : log.epochs) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ','
        << io::format_double(r.valid_loss) << ',' << io::format_double(r.wall_time) << '\n';
  }
  return out.str();
}

namespace {

using Snapshot = std::vector<Mat>;

Snapshot snapshot(njode::Njode& model) {
  Snapshot s;
  for (nn::Parameter* p : model.parameters()) s.push_back(p->value);
  return s;
}

void restore(njode::Njode& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

std::size_t count_valid(std::span<const loss::PathTargets* const> targets) {
  std::size_t n = 0;
  for (const auto* t : targets) n += t->n() > 0 ? 1 : 0;
  return n;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return (a * 0x9E3779B97F4A7C15ull) ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
}

struct ChunkResult {
  double loss = 0.0;
  std::vector<Mat> grads;
};

// Loss (and optionally gradients) of one batch split into fixed chunks.
std::vector<ChunkResult> run_chunks(njode::Njode& model, const loss::LossOptions& options,
                                    const sim::Grid& grid,
                                    std::span<const sim::ObservationSequence* const> obs,
                                    std::span<const loss::PathTargets* const> targets,
                                    std::size_t valid_total, int chunk_size, int threads,
                                    bool with_grad, std::uint64_t seed,
                                    std::uint64_t dropout_stream) {
  const std::size_t n = obs.size();
  const auto cs = static_cast<std::size_t>(chunk_size);
  const std::size_t n_chunks = (n + cs - 1) / cs;
  std::vector<ChunkResult> out(n_chunks);
  const auto params = model.parameters();
  parallel_for(n_chunks, resolve_threads(threads), [&](std::size_t c) {
    const std::size_t begin = c * cs;
    const std::size_t len = std::min(cs, n - begin);
    std::optional<Philox4x32> rng;
    if (with_grad) {
      rng.emplace(make_stream(seed, StreamDomain::kDropout, mix(dropout_stream, c)));
    }
    nn::Tape tape;
    nn::Var l = loss::batch_loss(tape, model, options, obs.subspan(begin, len),
                                 targets.subspan(begin, len), grid, rng ? &*rng : nullptr,
                                 valid_total);
    out[c].loss = tape.value(l)(0, 0);
    if (with_grad) {
      tape.backward(l);
      out[c].grads.reserve(params.size());
      for (const nn::Parameter* p : params) out[c].grads.push_back(tape.param_grad(*p));
    }
  });
  return out;
}

struct Unit {
  njode::Njode* model = nullptr;
  loss::LossOptions options;
  TrainingLog log;
};

void divergence_note(TrainResult& result, const std::string& model, int epoch,
                     const std::string& what) {
  std::ostringstream msg;
  msg << "training of '" << model << "' diverged in epoch " << epoch << ": " << what;
  result.diverged = true;
  result.divergence_message = msg.str();
}

}  // namespace

double evaluate_loss(njode::Njode& model, const loss::LossOptions& options,
                     const sim::Grid& grid, std::span<const sim::ObservationSequence> obs,
                     std::span<const loss::PathTargets> targets, int chunk_size,
                     int threads) {
  if (obs.size() != targets.size()) throw DataError("observation and target sets differ");
  std::vector<const sim::ObservationSequence*> op;
  std::vector<const loss::PathTargets*> tp;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    op.push_back(&obs[i]);
    tp.push_back(&targets[i]);
  }
  const std::size_t valid = count_valid(tp);
  if (valid == 0) return 0.0;
  double total = 0.0;
  for (const auto& r : run_chunks(model, options, grid, op, tp, valid, chunk_size, threads,
                                  false, 0, 0)) {
    total += r.loss;
  }
  return total;
}

TrainResult train(const TrainConfig& config, const sim::Grid& grid,
                  std::span<const sim::ObservationSequence> train_obs,
                  std::span<const sim::ObservationSequence> valid_obs,
                  const ProgressFn& progress) {
  config.validate();
  if (train_obs.empty()) throw DataError("training set is empty");
  if (valid_obs.empty()) throw DataError("validation set is empty");
  const int dim = train_obs.front().dim();

  TrainResult result;
  result.bundle = njode::ModelBundle::make(config.scheme, dim, config.arch, config.seed);
  const std::vector<loss::PathTargets> train_targets =
      loss::build_targets(train_obs, config.scheme, &result.diagnostics);
  const std::vector<loss::PathTargets> valid_targets =
      loss::build_targets(valid_obs, config.scheme, &result.diagnostics);
  result.truncation_level = 10.0 * loss::max_abs_quadratic_quotient(train_targets);

  std::vector<Unit> units;
  if (is_joint(config.scheme)) {
    units.push_back({&result.bundle.models[0],
                     {config.scheme, true, true, config.stop_gradient}, {}});
  } else {
    units.push_back({&result.bundle.drift_model(),
                     {config.scheme, true, false, config.stop_gradient}, {}});
    units.push_back({&result.bundle.diffusion_model(),
                     {config.scheme, false, true, config.stop_gradient}, {}});
  }

  const int E = config.epochs;
  const int floor_trigger = static_cast<int>(std::ceil(0.45 * E));
  const int floor_start = static_cast<int>(std::ceil(0.5 * E));
  const auto start_clock = std::chrono::steady_clock::now();

  for (std::size_t u = 0; u < units.size() && !result.diverged; ++u) {
    Unit& unit = units[u];
    njode::Njode& model = *unit.model;
    unit.log.model = model.name();
    nn::Adam adam(model.parameters(), config.adam);

    Snapshot best_all = snapshot(model);
    Snapshot best_late = best_all;
    double best_all_loss = std::numeric_limits<double>::infinity();
    double best_late_loss = best_all_loss;
    int best_all_epoch = 0;
    int best_late_epoch = 0;

    std::vector<std::size_t> order(train_obs.size());
    for (int epoch = 1; epoch <= E; ++epoch) {
      std::vector<sim::ObservationSequence> augmented;
      std::vector<loss::PathTargets> augmented_targets;
      std::span<const sim::ObservationSequence> epoch_obs = train_obs;
      std::span<const loss::PathTargets> epoch_targets = train_targets;
      if (config.long_term_training) {
        const std::uint64_t offset = mix(u, static_cast<std::uint64_t>(epoch)) << 24;
        augmented = augment_longterm(train_obs, grid.n_steps, config.long_term_keep_p,
                                     config.seed, offset);
        augmented_targets = loss::build_targets(augmented, config.scheme);
        epoch_obs = augmented;
        epoch_targets = augmented_targets;
      }

      // Fisher-Yates on the shuffle stream of this unit and epoch.
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Philox4x32 shuffle = make_stream(config.seed, StreamDomain::kShuffle,
                                       mix(u, static_cast<std::uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuffle.uniform() * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
      }

      double loss_sum = 0.0;
      double weight_sum = 0.0;
      const auto bs = static_cast<std::size_t>(config.batch_size);
      bool failed = false;
      for (std::size_t b0 = 0, batch = 0; b0 < order.size(); b0 += bs, ++batch) {
        std::vector<const sim::ObservationSequence*> ob;
        std::vector<const loss::PathTargets*> tb;
        for (std::size_t i = b0; i < std::min(order.size(), b0 + bs); ++i) {
          ob.push_back(&epoch_obs[order[i]]);
          tb.push_back(&epoch_targets[order[i]]);
        }
        const std::size_t valid = count_valid(tb);
        if (valid == 0) continue;
        std::vector<ChunkResult> chunks;
        try {
          chunks = run_chunks(model, unit.options, grid, ob, tb, valid, config.chunk_size,
                              config.threads, true, config.seed,
                              mix(mix(u, static_cast<std::uint64_t>(epoch)), batch));
        } catch (const DivergenceError& e) {
          divergence_note(result, model.name(), epoch, e.what());
          failed = true;
          break;
        }
        double batch_loss = 0.0;
        auto params = model.parameters();
        for (nn::Parameter* p : params) p->zero_grad();
        for (const auto& c : chunks) {
          batch_loss += c.loss;
          for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad += c.grads[k];
        }
        if (!std::isfinite(batch_loss)) {
          divergence_note(result, model.name(), epoch, "non-finite training loss");
          failed = true;
          break;
        }
        try {
          adam.step();
        } catch (const DivergenceError& e) {
          divergence_note(result, model.name(), epoch, e.what());
          failed = true;
          break;
        }
        loss_sum += batch_loss * static_cast<double>(valid);
        weight_sum += static_cast<double>(valid);
      }
      if (failed) break;

      double valid_loss = 0.0;
      try {
        valid_loss = evaluate_loss(model, unit.options, grid, valid_obs, valid_targets,
                                   config.chunk_size, config.threads);
      } catch (const DivergenceError& e) {
        divergence_note(result, model.name(), epoch, e.what());
        break;
      }
      if (!std::isfinite(valid_loss)) {
        divergence_note(result, model.name(), epoch, "non-finite validation loss");
        break;
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_loss = weight_sum > 0.0 ? loss_sum / weight_sum : 0.0;
      rec.valid_loss = valid_loss;
      if (config.record_wall_time) {
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      start_clock)
                            .count();
      }
      unit.log.epochs.push_back(rec);
      if (progress) progress(model.name(), rec);

      if (valid_loss < best_all_loss) {
        best_all_loss = valid_loss;
        best_all_epoch = epoch;
        best_all = snapshot(model);
      }
      if (epoch >= floor_start && valid_loss < best_late_loss) {
        best_late_loss = valid_loss;
        best_late_epoch = epoch;
        best_late = snapshot(model);
      }
    }
    result.optimizer_steps += adam.step_count();

    const int done = unit.log.epochs.empty() ? 0 : unit.log.epochs.back().epoch;
    if (done == 0) {
      unit.log.selected_epoch = 0;
      result.logs.push_back(unit.log);
      if (result.diverged) restore(model, best_all);
      continue;
    }
    EarlyStop policy = config.early_stop;
    if (result.diverged) policy = EarlyStop::kBest;
    int selected = done;
    double selected_loss = unit.log.epochs.back().valid_loss;
    if (policy == EarlyStop::kBest ||
        (policy == EarlyStop::kFloor &&
         (best_all_epoch >= floor_trigger || best_late_epoch == 0))) {
      selected = best_all_epoch;
      selected_loss = best_all_loss;
      restore(model, best_all);
    } else if (policy == EarlyStop::kFloor) {
      selected = best_late_epoch;
      selected_loss = best_late_loss;
      restore(model, best_late);
    }
    unit.log.selected_epoch = selected;
    unit.log.selected_valid_loss = selected_loss;
    result.logs.push_back(unit.log);
  }
  return result;
}

}  // namespace itogen::train
