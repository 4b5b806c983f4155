#include "commands.hpp"

#include "itogen/checkpoint.hpp"
#include "itogen/dataset_io.hpp"
#include "itogen/errors.hpp"
#include "itogen/eval.hpp"
#include "itogen/generator.hpp"
#include "itogen/svg.hpp"
#include "itogen/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace itogen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void write_manifest(const Layout& layout, const std::string& command, const RunConfig& config,
                    const json& extra = json::object()) {
  json m = {{"tool", "itogen"},
            {"version", kVersion},
            {"command", command},
            {"config", config_to_json(config)}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  io::write_text_file(layout.manifests() / (command + ".json"), m.dump(2) + "\n");
}

io::DatasetMeta data_meta(const RunConfig& c, bool observed) {
  io::DatasetMeta meta;
  meta.spec = c.sde;
  meta.T = c.T;
  meta.dt = c.dt;
  meta.seed = c.seed;
  if (observed) {
    io::ObservationMeta om;
    om.p = c.data.observation.p;
    om.coord_p = c.data.observation.coord_p;
    om.seed = c.seed;
    meta.observation = om;
  }
  return meta;
}

void simulate_into(const RunConfig& c, const fs::path& dir, std::ostream& log) {
  const sim::PathDataset ds = sim::simulate(c.sde, c.T, c.dt, c.data.n_paths, c.seed);
  const auto obs = sim::observe(ds, c.data.observation, c.seed);
  io::write_dataset(dir, ds, data_meta(c, true), &obs);
  std::size_t n_obs = 0;
  for (const auto& o : obs) n_obs += o.size() - 1;
  log << "simulated " << ds.n_paths() << " " << sim::to_string(c.sde.kind) << " paths ("
      << n_obs << " observations after t = 0) -> " << dir.string() << "\n";
}

struct SplitData {
  io::LoadedDataset data;
  sim::SplitIndices split;
  std::vector<sim::ObservationSequence> train;
  std::vector<sim::ObservationSequence> valid;
};

SplitData load_split(const fs::path& dir, const RunConfig& c) {
  SplitData s;
  s.data = io::read_dataset(dir);
  if (!s.data.observations) {
    throw DataError(dir.string() + " has no observation file (obs.csv)");
  }
  s.split = sim::split_indices(s.data.paths.n_paths(), c.data.train_fraction, c.seed);
  s.train = sim::take_rows(*s.data.observations, s.split.train);
  s.valid = sim::take_rows(*s.data.observations, s.split.valid);
  return s;
}

train::TrainResult train_into(const RunConfig& c, const SplitData& s, const fs::path& dir,
                              std::ostream& log) {
  const auto progress = [&](const std::string& model, const train::EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == c.train.epochs) {
      log << "  [" << model << "] epoch " << r.epoch << "  train " << std::setprecision(6)
          << r.train_loss << "  valid " << r.valid_loss << "\n";
    }
  };
  train::TrainResult res = train::train(c.train, s.data.paths.grid(), s.train, s.valid, progress);
  io::CheckpointMeta meta;
  meta.seed = c.seed;
  meta.epochs_trained = res.logs.empty() || res.logs.front().epochs.empty()
                            ? 0
                            : res.logs.front().epochs.back().epoch;
  meta.best_epoch = res.logs.empty() ? 0 : res.logs.front().selected_epoch;
  meta.optimizer_steps = res.optimizer_steps;
  meta.truncation_level = res.truncation_level;
  meta.dt = s.data.meta.dt;
  meta.horizon = s.data.meta.T;
  io::save_checkpoint(dir, res.bundle, meta);
  for (const auto& l : res.logs) {
    io::write_text_file(dir / ("train_log_" + l.model + ".csv"), train::log_to_csv(l));
    log << "  [" << l.model << "] selected epoch " << l.selected_epoch << "\n";
  }
  if (res.diagnostics.paths_without_observations > 0) {
    log << "  note: " << res.diagnostics.paths_without_observations
        << " paths have no observation after t = 0 and do not enter the loss\n";
  }
  if (res.diverged) throw DivergenceError(res.divergence_message + " (last good parameters saved)");
  return res;
}

struct Generated {
  gen::GenerationResult result;
  double K = 0.0;
};

Generated generate_into(const RunConfig& c, const io::LoadedCheckpoint& ckpt,
                        const sim::ObservationSequence& history, const fs::path& dir,
                        std::ostream& log) {
  Generated g;
  g.K = c.generate.K.value_or(ckpt.meta.truncation_level);
  if (!(g.K > 0.0)) throw ConfigError("generate.K is unset and the checkpoint stores no level");
  gen::GenerateOptions opt;
  opt.delta = c.generate.delta;
  opt.K = g.K;
  opt.horizon = c.generate.horizon.value_or(c.T);
  opt.n_paths = c.generate.n_paths;
  opt.seed = c.seed;
  opt.batch = c.generate.batch;
  const auto& bundle = ckpt.bundle;
  const double model_dt = ckpt.meta.dt;
  g.result = gen::generate(
      [&] { return std::make_unique<gen::NjodeCoefficients>(bundle, model_dt); }, history, opt);
  io::DatasetMeta meta;
  meta.spec = c.sde;
  meta.T = opt.horizon;
  meta.dt = opt.delta;
  meta.seed = c.seed;
  gen::GenerationMeta gm;
  gm.scheme = to_string(bundle.scheme);
  gm.model_checksum = io::checksum_hex(io::checksum(bundle));
  gm.delta = opt.delta;
  gm.K = g.K;
  gm.seed = c.seed;
  gm.start_time = g.result.start_time;
  gm.requested_paths = opt.n_paths;
  gm.diverged = g.result.diverged;
  gen::write_generated(dir, g.result, meta, gm);
  log << "generated " << g.result.paths.n_paths() << " paths (" << g.result.diverged
      << " diverged, K = " << g.K << ") -> " << dir.string() << "\n";
  return g;
}

sim::ObservationSequence start_history(const RunConfig& c) {
  if (c.sde.dim() < 1) throw ConfigError("sde.x0 must not be empty");
  return sim::ObservationSequence(c.dt, {sim::Observation{0, c.sde.x0, Vec::Ones(c.sde.dim())}});
}

// Observations of one data path before history_end plus its full value at
// history_end.
sim::ObservationSequence continuation_history(const RunConfig& c, const io::LoadedDataset& d) {
  const std::size_t p = c.generate.history_path;
  if (p >= d.paths.n_paths()) throw ConfigError("generate.history_path is out of range");
  const auto k_end = static_cast<GridIndex>(std::llround(c.generate.history_end / d.meta.dt));
  if (std::abs(static_cast<double>(k_end) * d.meta.dt - c.generate.history_end) > 1e-9) {
    throw ConfigError("generate.history_end is not on the data grid");
  }
  std::vector<sim::Observation> obs;
  if (d.observations) {
    for (const auto& o : (*d.observations)[p].observations()) {
      if (o.index < k_end) obs.push_back(o);
    }
  } else {
    obs.push_back({0, d.paths.point(p, 0), Vec::Ones(d.paths.dim())});
  }
  obs.push_back({k_end, d.paths.point(p, k_end), Vec::Ones(d.paths.dim())});
  return sim::ObservationSequence(d.meta.dt, std::move(obs));
}

struct Estimate {
  std::map<std::string, double> params;
  std::size_t invalid = 0;
  std::size_t total = 0;
  sim::PathDataset valid;
};

Estimate estimate_for(sim::SdeKind kind, const sim::PathDataset& ds) {
  Estimate e;
  e.total = ds.n_paths();
  if (kind == sim::SdeKind::kGbm) {
    auto f = eval::filter_invalid_gbm(ds);
    e.invalid = f.invalid;
    e.valid = std::move(f.valid);
    if (e.valid.n_paths() == 0) throw DataError("no valid paths left for the GBM estimator");
    const auto g = eval::estimate_gbm(e.valid);
    e.params = {{"mu", g.mu}, {"sigma", g.sigma}};
  } else if (kind == sim::SdeKind::kOu) {
    e.valid = ds;
    const auto o = eval::estimate_ou(ds);
    e.params = {{"kappa", o.kappa}, {"theta", o.theta}, {"sigma", o.sigma}};
  } else {
    throw ConfigError("no downstream estimator for custom processes");
  }
  return e;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

void cmd_simulate(const RunConfig& c, std::ostream& log) {
  const Layout layout{c.out};
  simulate_into(c, layout.data(), log);
  write_manifest(layout, "simulate", c);
}

void cmd_train(const RunConfig& c, std::ostream& log) {
  const Layout layout{c.out};
  const SplitData s = load_split(layout.data(), c);
  log << "training " << to_string(c.train.scheme) << " on " << s.train.size() << " paths ("
      << s.valid.size() << " validation)\n";
  write_manifest(layout, "train", c);
  train_into(c, s, layout.model(), log);
}

void cmd_generate(const RunConfig& c, const fs::path& checkpoint, std::ostream& log) {
  const Layout layout{c.out};
  const fs::path ckpt_dir = checkpoint.empty() ? layout.model() : checkpoint;
  if (!fs::exists(ckpt_dir / "model.json")) {
    throw DataError("missing checkpoint: " + (ckpt_dir / "model.json").string() +
                    " (run 'itogen train' first or pass --checkpoint)");
  }
  const io::LoadedCheckpoint ckpt = io::load_checkpoint(ckpt_dir);
  sim::ObservationSequence history = start_history(c);
  if (c.generate.history_end > 0.0) {
    history = continuation_history(c, io::read_dataset(layout.data()));
  }
  write_manifest(layout, "generate", c, {{"checkpoint", ckpt_dir.string()}});
  generate_into(c, ckpt, history, layout.generated(), log);
}

void cmd_evaluate(const RunConfig& c, const std::vector<fs::path>& datasets, std::ostream& log) {
  const Layout layout{c.out};
  if (!datasets.empty() && datasets.size() != 2) {
    throw ConfigError("evaluate takes either no datasets or exactly two (reference, candidate)");
  }
  io::LoadedDataset ref_data;
  io::LoadedDataset cand_data;
  std::string ref_label = "reference";
  std::string cand_label = "generated";
  sim::PathDataset ref;
  if (datasets.empty()) {
    ref_data = io::read_dataset(layout.data());
    cand_data = io::read_dataset(layout.generated());
    if (c.evaluate.reference == "train") {
      ref = ref_data.paths.subset(
          sim::split_indices(ref_data.paths.n_paths(), c.data.train_fraction, c.seed).train);
    } else {
      ref = ref_data.paths;
    }
  } else {
    ref_data = io::read_dataset(datasets[0]);
    cand_data = io::read_dataset(datasets[1]);
    ref = ref_data.paths;
    ref_label = datasets[0].filename().string();
    cand_label = datasets[1].filename().string();
    if (ref_label == cand_label) cand_label += " (2)";
  }
  const sim::SdeKind kind = ref_data.meta.spec.kind;
  eval::EvalReport report;
  report.reference_label = ref_label;
  report.candidate_label = cand_label;
  const Estimate er = estimate_for(kind, ref);
  const Estimate ec = estimate_for(kind, cand_data.paths);
  report.estimates[ref_label] = er.params;
  report.estimates[cand_label] = ec.params;
  report.invalid_paths[ref_label] = er.invalid;
  report.invalid_paths[cand_label] = ec.invalid;
  report.total_paths[ref_label] = er.total;
  report.total_paths[cand_label] = ec.total;
  std::vector<double> times;
  for (double t : c.evaluate.times) {
    if (t <= ref.grid().horizon() + 1e-12 && t <= cand_data.paths.grid().horizon() + 1e-12) {
      times.push_back(t);
    }
  }
  report.marginals = eval::compare_marginals(er.valid, ec.valid, times);

  io::write_text_file(layout.eval() / "report.json", report.to_json());
  io::write_text_file(layout.eval() / "histograms.csv", report.histograms_csv());
  std::ostringstream est;
  est << "dataset,parameter,value\n";
  for (const auto& [label, params] : report.estimates) {
    for (const auto& [name, v] : params) est << label << ',' << name << ',' << io::format_double(v) << '\n';
    est << label << ",invalid_paths," << report.invalid_paths[label] << '\n';
  }
  io::write_text_file(layout.eval() / "estimates.csv", est.str());
  write_manifest(layout, "evaluate", c);

  for (const auto& [label, params] : report.estimates) {
    log << std::setw(12) << label;
    for (const auto& [name, v] : params) log << "  " << name << " = " << fixed(v);
    log << "  invalid = " << report.invalid_paths[label] << "\n";
  }
  for (const auto& m : report.marginals) {
    log << "t = " << m.time << ": KS " << fixed(m.ks) << " (1% critical " << fixed(m.ks_critical)
        << "), mean delta " << fixed(m.mean_delta()) << ", var delta " << fixed(m.var_delta())
        << "\n";
  }
}

void cmd_plot(const RunConfig& c, std::ostream& log) {
  const Layout layout{c.out};
  const io::LoadedDataset data = io::read_dataset(layout.data());
  io::write_text_file(layout.plots() / "paths_data.svg",
                      svg::path_overlay(data.paths, 20, "Training paths"));
  std::size_t written = 1;
  if (fs::exists(layout.generated() / "meta.json")) {
    const io::LoadedDataset gen_data = io::read_dataset(layout.generated());
    io::write_text_file(layout.plots() / "paths_generated.svg",
                        svg::path_overlay(gen_data.paths, 20, "Generated paths"));
    ++written;
    std::vector<double> times;
    for (double t : c.evaluate.times) {
      if (t <= gen_data.paths.grid().horizon() + 1e-12) times.push_back(t);
    }
    for (const auto& m : eval::compare_marginals(data.paths, gen_data.paths, times)) {
      std::ostringstream name;
      name << "marginal_t" << fixed(m.time, 2) << ".svg";
      io::write_text_file(layout.plots() / name.str(),
                          svg::marginal_histogram(m, "data", "generated"));
      ++written;
    }
  }
  if (fs::exists(layout.model() / "model.json")) {
    // Coefficient estimates along the first data path, fed at every grid point.
    const io::LoadedCheckpoint ckpt = io::load_checkpoint(layout.model());
    gen::NjodeCoefficients source(ckpt.bundle, ckpt.meta.dt);
    const auto& ds = data.paths;
    const int d = ds.dim();
    Mat x = source.begin(sim::ObservationSequence(ds.grid().dt, {{0, ds.point(0, 0), Vec::Ones(d)}}), 1);
    x.col(0) = ds.point(0, 0);
    std::ostringstream csv;
    csv << "time,x,mu_hat,mu_true,sigma2_hat,sigma2_true\n";
    svg::Series mu_hat{"estimated drift", {}, {}}, mu_true{"true drift", {}, {}};
    svg::Series s_hat{"estimated diffusion", {}, {}}, s_true{"true diffusion", {}, {}};
    const double dt = ds.grid().dt;
    for (GridIndex k = 0; k + 1 < ds.grid().n_points(); ++k) {
      const double t = ds.grid().time(k);
      const gen::CoefficientBatch cb = source.coefficients(t, dt, x);
      const Vec xv = x.col(0);
      const Mat s = c.sde.diffusion(t, xv);
      const double sig_true = (s * s.transpose())(0, 0);
      const double mu_t = c.sde.drift(t, xv)[0];
      csv << io::format_double(t) << ',' << io::format_double(xv[0]) << ','
          << io::format_double(cb.mu(0, 0)) << ',' << io::format_double(mu_t) << ','
          << io::format_double(cb.sigma(0, 0)) << ',' << io::format_double(sig_true) << '\n';
      mu_hat.x.push_back(t);
      mu_hat.y.push_back(cb.mu(0, 0));
      mu_true.x.push_back(t);
      mu_true.y.push_back(mu_t);
      s_hat.x.push_back(t);
      s_hat.y.push_back(cb.sigma(0, 0));
      s_true.x.push_back(t);
      s_true.y.push_back(sig_true);
      x.col(0) = ds.point(0, k + 1);
      source.advance(ds.grid().time(k + 1), x);
    }
    io::write_text_file(layout.plots() / "coeff_trace.csv", csv.str());
    io::write_text_file(layout.plots() / "coeff_drift.svg",
                        svg::line_chart({mu_hat, mu_true}, "Drift along a data path", "t", "mu"));
    io::write_text_file(layout.plots() / "coeff_diffusion.svg",
                        svg::line_chart({s_hat, s_true}, "Diffusion along a data path", "t",
                                        "sigma^2"));
    written += 3;
  }
  log << "wrote " << written << " plot files to " << layout.plots().string() << "\n";
}

Table table_from_string(const std::string& name) {
  if (name == "table1" || name == "Table1" || name == "1") return Table::kTable1;
  if (name == "table2" || name == "Table2" || name == "2") return Table::kTable2;
  throw ConfigError("unknown table '" + name + "' (expected table1 or table2)");
}

namespace {

struct Row {
  std::string label;
  std::string slug;
  Scheme scheme = Scheme::kJointInstant;
  bool dense = false;  // observation probability 1
  std::vector<double> published;  // parameters then invalid paths
};

std::size_t scaled(double base, double scale, std::size_t floor) {
  return std::max<std::size_t>(floor, static_cast<std::size_t>(std::llround(base * scale)));
}

}  // namespace

void cmd_reproduce(const RunConfig& base, Table table, double scale, std::ostream& log) {
  if (!(scale >= 0.0)) throw ConfigError("--scale must be >= 0");
  RunConfig c = base;
  std::vector<Row> rows;
  std::vector<std::string> param_names;
  std::vector<double> published_reference;
  std::string name;
  if (table == Table::kTable1) {
    name = "table1";
    c.sde = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
    param_names = {"mu", "sigma"};
    published_reference = {1.9841, 0.2941, 0};
    rows = {{"Base", "base", Scheme::kBase, false, {2.1478, 0.8154, 234}},
            {"Joint Base", "joint-base", Scheme::kJointBase, false, {2.0892, 0.2344, 0}},
            {"Instant", "instant", Scheme::kInstant, false, {1.8717, 0.2575, 0}},
            {"Joint Instant", "joint-instant", Scheme::kJointInstant, false, {1.9619, 0.2974, 0}},
            {"Joint Instant 1-step", "joint-instant-1step", Scheme::kJointInstant, true,
             {1.9819, 0.2909, 0}}};
  } else {
    name = "table2";
    c.sde = sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1));
    param_names = {"kappa", "theta", "sigma"};
    published_reference = {2.0213, 3.0060, 1.0091};
    rows = {{"Joint Instant", "joint-instant", Scheme::kJointInstant, false, {2.1642, 3.0216, 1.0293}}};
  }
  c.T = 1.0;
  c.dt = 0.01;
  c.data.observation.p = 0.1;
  c.data.observation.coord_p.reset();
  c.data.train_fraction = 0.8;
  // A dry run describes the full-scale plan.
  const double effective = scale == 0.0 ? 1.0 : scale;
  c.data.n_paths = scaled(20000, effective, 10);
  c.train.epochs = static_cast<int>(scaled(200, effective, 1));
  c.generate.n_paths = scaled(5000, effective, 1);
  c.generate.delta = 0.01;
  c.generate.K.reset();
  c.generate.horizon.reset();
  c.generate.history_end = 0.0;
  c.train.record_wall_time = false;
  c.train.seed = c.seed;
  const Layout layout{fs::path(c.out) / name};

  log << name << " at scale " << effective << ": simulate " << c.data.n_paths << " "
      << sim::to_string(c.sde.kind) << " paths (p = 0.1), train "
      << llround(c.data.n_paths * c.data.train_fraction) << " for " << c.train.epochs
      << " epochs, generate " << c.generate.n_paths << " paths per method\n";
  for (const auto& r : rows) {
    log << "  " << r.label << ": scheme " << to_string(r.scheme)
        << (r.dense ? ", observation probability 1" : "") << "\n";
  }
  if (scale == 0.0) {
    log << "dry run: nothing executed (pass --scale > 0 to run)\n";
    return;
  }
  c.validate();
  write_manifest(layout, "reproduce", c, {{"table", name}, {"scale", scale}});

  simulate_into(c, layout.root / "data", log);
  const SplitData sparse = load_split(layout.root / "data", c);
  std::optional<SplitData> dense;

  // Reference estimates on the training split.
  const sim::PathDataset train_paths = sparse.data.paths.subset(sparse.split.train);
  const Estimate ref = estimate_for(c.sde.kind, train_paths);

  std::ostringstream csv;
  csv << "method";
  for (const auto& p : param_names) csv << ',' << p;
  csv << ",invalid_paths,generated_paths";
  for (const auto& p : param_names) csv << ",published_" << p;
  if (table == Table::kTable1) csv << ",published_invalid_paths";
  csv << '\n';
  auto emit = [&](const std::string& label, const Estimate& e, std::size_t n_total,
                  const std::vector<double>& published) {
    csv << label;
    for (const auto& p : param_names) csv << ',' << io::format_double(e.params.at(p));
    csv << ',' << e.invalid << ',' << n_total;
    for (double v : published) csv << ',' << io::format_double(v);
    csv << '\n';
  };
  std::vector<double> ref_published = published_reference;
  if (table == Table::kTable2) ref_published.resize(3);
  emit("Reference", ref, ref.total, ref_published);

  std::ostringstream md;
  md << "| Method |";
  for (const auto& p : param_names) md << ' ' << p << " |";
  if (table == Table::kTable1) md << " invalid paths |";
  for (const auto& p : param_names) md << " published " << p << " |";
  if (table == Table::kTable1) md << " published invalid |";
  md << "\n|---|";
  const std::size_t cols = 2 * param_names.size() + (table == Table::kTable1 ? 2 : 0);
  for (std::size_t i = 0; i < cols; ++i) md << "---|";
  md << '\n';
  auto emit_md = [&](const std::string& label, const Estimate& e, const std::vector<double>& published) {
    md << "| " << label << " |";
    for (const auto& p : param_names) md << ' ' << fixed(e.params.at(p)) << " |";
    if (table == Table::kTable1) md << ' ' << e.invalid << " |";
    for (std::size_t i = 0; i < param_names.size(); ++i) md << ' ' << fixed(published[i]) << " |";
    if (table == Table::kTable1) md << ' ' << static_cast<long>(published.back()) << " |";
    md << '\n';
  };
  emit_md("Reference", ref, published_reference);

  for (const auto& r : rows) {
    RunConfig rc = c;
    rc.train.scheme = r.scheme;
    rc.train.long_term_training = false;
    const SplitData* data = &sparse;
    if (r.dense) {
      if (!dense) {
        RunConfig dc = c;
        dc.data.observation.p = 1.0;
        const fs::path dir = layout.root / "data_p1";
        const sim::PathDataset& ds = sparse.data.paths;
        const auto obs = sim::observe(ds, dc.data.observation, dc.seed);
        io::write_dataset(dir, ds, data_meta(dc, true), &obs);
        dense = load_split(dir, dc);
      }
      data = &*dense;
    }
    log << r.label << ":\n";
    const train::TrainResult tr = train_into(rc, *data, layout.root / r.slug / "model", log);
    io::LoadedCheckpoint ckpt{tr.bundle, {}};
    ckpt.meta.truncation_level = tr.truncation_level;
    ckpt.meta.dt = c.dt;
    ckpt.meta.horizon = c.T;
    const Generated g =
        generate_into(rc, ckpt, start_history(rc), layout.root / r.slug / "generated", log);
    const Estimate e = estimate_for(c.sde.kind, g.result.paths);
    Estimate reported = e;
    reported.invalid += g.result.diverged;
    emit(r.label, reported, c.generate.n_paths, r.published);
    emit_md(r.label, reported, r.published);
  }
  io::write_text_file(layout.root / "table.csv", csv.str());
  io::write_text_file(layout.root / "table.md", md.str());
  log << "\n" << md.str();
}

}  // namespace itogen::cli
