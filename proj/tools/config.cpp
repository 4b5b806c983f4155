#include "config.hpp"

#include "itogen/dataset_io.hpp"
#include "itogen/errors.hpp"

#include <set>

namespace itogen::cli {

using nlohmann::json;

namespace {

// Typed field access that names the offending key on failure.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + " has the wrong type");
    }
  }

  template <typename T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  std::optional<Reader> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return Reader(j_.at(key), field(key));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown configuration key " + field(k.c_str()));
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "configuration" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

sim::SdeSpec sde_from(Reader& r) {
  std::string kind = "gbm";
  r.get("kind", kind);
  std::vector<double> x0{1.0};
  r.get("x0", x0);
  std::map<std::string, double> params;
  r.get("params", params);
  const Vec x0v = Eigen::Map<const Vec>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  sim::SdeSpec spec;
  const sim::SdeKind k = sim::sde_kind_from_string(kind);
  auto need = [&](const char* name) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError(r.field("params") + " needs '" + name + "'");
    return it->second;
  };
  if (k == sim::SdeKind::kGbm) {
    spec = sim::SdeSpec::gbm(need("mu"), need("sigma"), x0v);
  } else if (k == sim::SdeKind::kOu) {
    spec = sim::SdeSpec::ou(need("kappa"), need("theta"), need("sigma"), x0v);
  } else {
    throw ConfigError(r.field("kind") + ": custom processes cannot be configured from JSON");
  }
  r.finish();
  return spec;
}

}  // namespace

void RunConfig::validate() const {
  sde.validate();
  sim::Grid::from_horizon(T, dt);
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (data.n_paths < 2) throw ConfigError("data.n_paths must be >= 2");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("data.train_fraction must lie in (0, 1)");
  }
  if (!(data.observation.p > 0.0 && data.observation.p <= 1.0)) {
    throw ConfigError("data.observation.p must lie in (0, 1]");
  }
  if (data.observation.coord_p &&
      !(*data.observation.coord_p > 0.0 && *data.observation.coord_p <= 1.0)) {
    throw ConfigError("data.observation.coord_p must lie in (0, 1]");
  }
  train.validate();
  if (generate.n_paths < 1) throw ConfigError("generate.n_paths must be >= 1");
  if (!(generate.delta > 0.0)) throw ConfigError("generate.delta must be > 0");
  if (generate.K && !(*generate.K > 0.0)) throw ConfigError("generate.K must be > 0");
  if (generate.horizon && !(*generate.horizon > 0.0 && *generate.horizon <= T + 1e-12)) {
    throw ConfigError("generate.horizon must lie in (0, T]");
  }
  if (!(generate.history_end >= 0.0 && generate.history_end < T)) {
    throw ConfigError("generate.history_end must lie in [0, T)");
  }
  if (generate.batch < 1) throw ConfigError("generate.batch must be >= 1");
  if (evaluate.reference != "train" && evaluate.reference != "all") {
    throw ConfigError("evaluate.reference must be 'train' or 'all'");
  }
  for (double t : evaluate.times) {
    if (!(t >= 0.0 && t <= T + 1e-12)) throw ConfigError("evaluate.times must lie in [0, T]");
  }
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("out", c.out);
  r.get("threads", c.threads);
  if (auto s = r.child("sde")) c.sde = sde_from(*s);
  if (auto g = r.child("grid")) {
    g->get("T", c.T);
    g->get("dt", c.dt);
    g->finish();
  }
  if (auto d = r.child("data")) {
    d->get("n_paths", c.data.n_paths);
    d->get("train_fraction", c.data.train_fraction);
    if (auto o = d->child("observation")) {
      o->get("p", c.data.observation.p);
      o->get_optional("coord_p", c.data.observation.coord_p);
      o->finish();
    }
    d->finish();
  }
  if (auto m = r.child("model")) {
    auto& a = c.train.arch;
    m->get("latent_dim", a.latent_dim);
    m->get("hidden", a.hidden);
    m->get("recurrent_encoder", a.recurrent_encoder);
    m->get("residual_encoder", a.residual_encoder);
    m->get("residual_decoder", a.residual_decoder);
    m->get("substeps", a.substeps);
    m->get("field_bound", a.field_bound);
    m->finish();
  }
  if (auto t = r.child("train")) {
    auto& tc = c.train;
    std::string scheme = to_string(tc.scheme);
    t->get("scheme", scheme);
    tc.scheme = scheme_from_string(scheme);
    t->get("epochs", tc.epochs);
    t->get("batch_size", tc.batch_size);
    t->get("lr", tc.adam.lr);
    t->get("beta1", tc.adam.beta1);
    t->get("beta2", tc.adam.beta2);
    t->get("eps", tc.adam.eps);
    t->get("weight_decay", tc.adam.weight_decay);
    t->get("dropout", tc.arch.dropout);
    std::string early = to_string(tc.early_stop);
    t->get("early_stop", early);
    tc.early_stop = train::early_stop_from_string(early);
    t->get("long_term_training", tc.long_term_training);
    t->get("long_term_keep_p", tc.long_term_keep_p);
    t->get("stop_gradient", tc.stop_gradient);
    t->get("chunk_size", tc.chunk_size);
    t->finish();
  }
  if (auto g = r.child("generate")) {
    g->get("n_paths", c.generate.n_paths);
    g->get("delta", c.generate.delta);
    g->get_optional("K", c.generate.K);
    g->get_optional("horizon", c.generate.horizon);
    g->get("history_end", c.generate.history_end);
    g->get("history_path", c.generate.history_path);
    g->get("batch", c.generate.batch);
    g->finish();
  }
  if (auto e = r.child("evaluate")) {
    e->get("times", c.evaluate.times);
    e->get("reference", c.evaluate.reference);
    e->finish();
  }
  r.finish();
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json sde = {{"kind", sim::to_string(c.sde.kind)},
              {"params", c.sde.params},
              {"x0", std::vector<double>(c.sde.x0.data(), c.sde.x0.data() + c.sde.x0.size())}};
  json obs = {{"p", c.data.observation.p}, {"coord_p", nullptr}};
  if (c.data.observation.coord_p) obs["coord_p"] = *c.data.observation.coord_p;
  const auto& a = c.train.arch;
  const auto& t = c.train;
  json gen = {{"n_paths", c.generate.n_paths}, {"delta", c.generate.delta},
              {"K", nullptr}, {"horizon", nullptr},
              {"history_end", c.generate.history_end},
              {"history_path", c.generate.history_path}, {"batch", c.generate.batch}};
  if (c.generate.K) gen["K"] = *c.generate.K;
  if (c.generate.horizon) gen["horizon"] = *c.generate.horizon;
  return {{"seed", c.seed},
          {"out", c.out},
          {"threads", c.threads},
          {"sde", sde},
          {"grid", {{"T", c.T}, {"dt", c.dt}}},
          {"data", {{"n_paths", c.data.n_paths},
                    {"train_fraction", c.data.train_fraction},
                    {"observation", obs}}},
          {"model", {{"latent_dim", a.latent_dim},
                     {"hidden", a.hidden},
                     {"recurrent_encoder", a.recurrent_encoder},
                     {"residual_encoder", a.residual_encoder},
                     {"residual_decoder", a.residual_decoder},
                     {"substeps", a.substeps},
                     {"field_bound", a.field_bound}}},
          {"train", {{"scheme", to_string(t.scheme)},
                     {"epochs", t.epochs},
                     {"batch_size", t.batch_size},
                     {"lr", t.adam.lr},
                     {"beta1", t.adam.beta1},
                     {"beta2", t.adam.beta2},
                     {"eps", t.adam.eps},
                     {"weight_decay", t.adam.weight_decay},
                     {"dropout", a.dropout},
                     {"early_stop", train::to_string(t.early_stop)},
                     {"long_term_training", t.long_term_training},
                     {"long_term_keep_p", t.long_term_keep_p},
                     {"stop_gradient", t.stop_gradient},
                     {"chunk_size", t.chunk_size}}},
          {"generate", gen},
          {"evaluate", {{"times", c.evaluate.times}, {"reference", c.evaluate.reference}}}};
}

RunConfig load_config(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(io::read_text_file(file));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + file.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

RunConfig gbm_defaults() { return RunConfig{}; }

RunConfig ou_defaults() {
  RunConfig c;
  c.sde = sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1));
  return c;
}

}  // namespace itogen::cli
