// Acceptance suite.  One PASS/FAIL line per criterion; the exit status is
// non-zero when any criterion fails.  Usage:
//   itogen_acceptance [--workdir DIR] [--only 1,2,...]
#include "../unit/fd_check.hpp"
#include "commands.hpp"
#include "config.hpp"

#include "itogen/coeff.hpp"
#include "itogen/dataset_io.hpp"
#include "itogen/eval.hpp"
#include "itogen/generator.hpp"
#include "itogen/losses.hpp"
#include "itogen/njode.hpp"
#include "itogen/rng.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace itogen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(prec);
  s << v;
  return s.str();
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

// ---------------------------------------------------------------------------
// Shared desk-scale runs for criteria 2-4.

constexpr std::uint64_t kSeed = 2024;

cli::RunConfig desk_config(const fs::path& out, const sim::SdeSpec& sde, Scheme scheme) {
  cli::RunConfig c = sde.kind == sim::SdeKind::kOu ? cli::ou_defaults() : cli::gbm_defaults();
  c.sde = sde;
  c.out = out.string();
  c.seed = kSeed;
  c.train.seed = kSeed;
  c.data.n_paths = 5000;  // 4000 training paths at the 0.8 split
  c.train.epochs = 100;
  c.train.scheme = scheme;
  c.generate.n_paths = 2000;
  return c;
}

struct DeskRun {
  std::map<std::string, double> reference;
  std::map<std::string, double> generated;
  std::size_t invalid = 0;
  std::size_t generated_total = 0;
  double seconds = 0.0;
};

std::map<std::string, double> estimate(sim::SdeKind kind, const sim::PathDataset& ds,
                                       std::size_t* invalid) {
  if (kind == sim::SdeKind::kGbm) {
    const auto f = eval::filter_invalid_gbm(ds);
    if (invalid != nullptr) *invalid = f.invalid;
    const auto e = eval::estimate_gbm(f.valid);
    return {{"mu", e.mu}, {"sigma", e.sigma}};
  }
  if (invalid != nullptr) *invalid = 0;
  const auto e = eval::estimate_ou(ds);
  return {{"kappa", e.kappa}, {"theta", e.theta}, {"sigma", e.sigma}};
}

DeskRun desk_run(const cli::RunConfig& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root(c.out);
  fs::remove_all(root);
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  cli::cmd_train(c, log);
  cli::cmd_generate(c, root / "model", log);
  const auto data = io::read_dataset(root / "data");
  const auto gen = io::read_dataset(root / "generated");
  DeskRun r;
  const auto split = sim::split_indices(data.paths.n_paths(), c.data.train_fraction, c.seed);
  r.reference = estimate(c.sde.kind, data.paths.subset(split.train), nullptr);
  std::size_t invalid = 0;
  r.generated = estimate(c.sde.kind, gen.paths, &invalid);
  // Paths removed as non-finite during generation count as invalid too.
  r.generated_total = c.generate.n_paths;
  r.invalid = invalid + (c.generate.n_paths - gen.paths.n_paths());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream(root / "acceptance_log.txt") << log.str();
  return r;
}

class DeskRuns {
 public:
  explicit DeskRuns(fs::path dir) : dir_(std::move(dir)) {}

  const DeskRun& gbm_joint_instant() {
    if (!gbm_ji_) {
      gbm_ji_ = desk_run(desk_config(dir_ / "gbm_joint_instant",
                                     sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)),
                                     Scheme::kJointInstant));
    }
    return *gbm_ji_;
  }
  const DeskRun& gbm_base() {
    if (!gbm_base_) {
      gbm_base_ = desk_run(desk_config(dir_ / "gbm_base", sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)),
                                       Scheme::kBase));
    }
    return *gbm_base_;
  }
  const DeskRun& ou_joint_instant() {
    if (!ou_ji_) {
      ou_ji_ = desk_run(desk_config(dir_ / "ou_joint_instant",
                                    sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1)),
                                    Scheme::kJointInstant));
    }
    return *ou_ji_;
  }

 private:
  fs::path dir_;
  std::optional<DeskRun> gbm_ji_;
  std::optional<DeskRun> gbm_base_;
  std::optional<DeskRun> ou_ji_;
};

// ---------------------------------------------------------------------------

Outcome criterion1() {
  gen::GenerateOptions o;
  o.delta = 0.01;
  o.K = 100.0;
  o.horizon = 1.0;
  o.n_paths = 5000;
  o.seed = kSeed;
  const auto spec = sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1));
  const auto r = gen::generate_from(
      [spec] { return std::make_unique<gen::AnalyticCoefficients>(spec); }, Vec::Ones(1), o);
  const auto f = eval::filter_invalid_gbm(r.paths);
  const std::size_t invalid = f.invalid + r.diverged;
  const auto e = eval::estimate_gbm(f.valid);
  return {within(e.mu, 1.95, 2.05) && within(e.sigma, 0.29, 0.31) && invalid == 0,
          "mu " + fmt(e.mu) + " in [1.95, 2.05], sigma " + fmt(e.sigma) +
              " in [0.29, 0.31], invalid " + std::to_string(invalid)};
}

Outcome criterion2(DeskRuns& runs) {
  const auto& r = runs.gbm_joint_instant();
  const double dmu = std::abs(r.generated.at("mu") - r.reference.at("mu"));
  const double dsigma = std::abs(r.generated.at("sigma") - r.reference.at("sigma"));
  return {dmu <= 0.20 && dsigma <= 0.05 && r.invalid == 0,
          "generated mu " + fmt(r.generated.at("mu")) + " vs reference " +
              fmt(r.reference.at("mu")) + " (|d| " + fmt(dmu) + " <= 0.20), sigma " +
              fmt(r.generated.at("sigma")) + " vs " + fmt(r.reference.at("sigma")) + " (|d| " +
              fmt(dsigma) + " <= 0.05), invalid " + std::to_string(r.invalid) + ", " +
              fmt(r.seconds, 0) + " s"};
}

Outcome criterion3(DeskRuns& runs) {
  const auto& r = runs.ou_joint_instant();
  const double k = r.generated.at("kappa");
  const double th = r.generated.at("theta");
  const double s = r.generated.at("sigma");
  return {within(k, 1.6, 2.6) && within(th, 2.8, 3.2) && within(s, 0.90, 1.15),
          "kappa " + fmt(k) + " in [1.6, 2.6], theta " + fmt(th) + " in [2.8, 3.2], sigma " +
              fmt(s) + " in [0.90, 1.15], " + fmt(r.seconds, 0) + " s"};
}

Outcome criterion4(DeskRuns& runs) {
  const auto& ji = runs.gbm_joint_instant();
  const auto& base = runs.gbm_base();
  const double ref = ji.reference.at("sigma");
  const double err_base = std::abs(base.generated.at("sigma") - ref);
  const double err_ji = std::abs(ji.generated.at("sigma") - ref);
  const bool ordering = err_base >= 2.0 * err_ji;
  const bool only_base_invalid = base.invalid > 0 && ji.invalid == 0;
  return {ordering && only_base_invalid,
          "sigma error Base " + fmt(err_base) + " vs Joint Instant " + fmt(err_ji) +
              " (need >= 2x), invalid paths Base " + std::to_string(base.invalid) +
              " (need > 0), Joint Instant " + std::to_string(ji.invalid) + " (need 0), " +
              fmt(base.seconds, 0) + " s"};
}

sim::ObservationSequence random_path(std::uint64_t seed, int d, std::size_t n_obs) {
  auto rng = make_stream(seed, StreamDomain::kObserve, 77);
  std::vector<sim::Observation> o{{0, Vec::Ones(d), Vec::Ones(d)}};
  GridIndex k = 0;
  for (std::size_t i = 0; i < n_obs; ++i) {
    k += 1 + static_cast<GridIndex>(rng.uniform() * 20);
    Vec x(d);
    for (int j = 0; j < d; ++j) x[j] = 1.0 + 0.5 * rng.normal();
    o.push_back({k, x, Vec::Ones(d)});
  }
  return sim::ObservationSequence(0.01, std::move(o));
}

const sim::Grid kGrid{0.01, 100};

njode::ModelBundle small_bundle(Scheme s, int d, int latent, std::uint64_t seed) {
  njode::Architecture a;
  a.latent_dim = latent;
  a.hidden = 7;
  return njode::ModelBundle::make(s, d, a, seed);
}

loss::LossOptions options_for(Scheme s, const njode::Njode& m) {
  return {s, m.config().drift_head, m.config().diffusion_head, true};
}

Outcome criterion5() {
  double worst = 0.0;
  std::string where;
  double worst_coord = 0.0;
  std::size_t checked = 0;
  for (Scheme s : {Scheme::kBase, Scheme::kJointBase, Scheme::kInstant, Scheme::kJointInstant}) {
    auto b = small_bundle(s, 1, 10, 11);
    std::vector<sim::ObservationSequence> obs{random_path(12, 1, 3)};
    const auto tg = loss::build_targets(obs, s);
    const sim::ObservationSequence* op = &obs[0];
    const loss::PathTargets* tp = &tg[0];
    for (auto& m : b.models) {
      // Stop-gradient deliberately departs from the derivative of the loss
      // value, so the check runs with it off.
      auto opt = options_for(s, m);
      opt.stop_gradient = false;
      auto f = [&](nn::Tape& t) {
        return loss::batch_loss(t, m, opt, std::span(&op, 1), std::span(&tp, 1), kGrid, nullptr);
      };
      auto ps = m.parameters();
      const auto r = test_support::finite_difference_check(f, ps, 1e-5);
      checked += r.checked;
      worst_coord = std::max(worst_coord, r.worst_coordinate);
      if (r.worst_relative >= worst) {
        worst = r.worst_relative;
        where = to_string(s) + "/" + r.worst_parameter;
      }
    }
  }
  return {worst <= 1e-4, "worst per-parameter relative error " + fmt(worst * 1e6, 3) + "e-6 at " +
                             where + " (<= 1e-4) over " + std::to_string(checked) +
                             " coordinates; worst single coordinate " + fmt(worst_coord * 1e6, 1) +
                             "e-6"};
}

double eval_loss(njode::Njode& m, const loss::LossOptions& opt,
                 const std::vector<sim::ObservationSequence>& obs,
                 const std::vector<loss::PathTargets>& tg) {
  std::vector<const sim::ObservationSequence*> o;
  std::vector<const loss::PathTargets*> t;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    o.push_back(&obs[i]);
    t.push_back(&tg[i]);
  }
  nn::Tape tape;
  return tape.value(loss::batch_loss(tape, m, opt, o, t, kGrid, nullptr))(0, 0);
}

Outcome criterion6() {
  std::vector<std::string> failures;
  auto rng = make_stream(kSeed, StreamDomain::kInit, 6);

  // S = G2 G2^T over random diffusion readouts.
  double worst_asym = 0.0;
  double min_eig = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Mat g(3, 3);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const auto e = coeff::estimate_instant(Vec::Zero(3), g, 1e6);
    worst_asym = std::max(worst_asym, (e.sigma - e.sigma.transpose()).cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat> eig(e.sigma);
    min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
  }
  if (worst_asym != 0.0 || min_eig < -1e-12) failures.push_back("S not symmetric PSD");

  double worst_sqrt = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Mat g(4, 4);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    const Mat s = g * g.transpose();
    const Mat r = coeff::psd_sqrt(s);
    worst_sqrt = std::max(worst_sqrt, (r * r.transpose() - s).norm() / std::max(1.0, s.norm()));
  }
  if (worst_sqrt > 1e-8) failures.push_back("psd_sqrt round trip " + fmt(worst_sqrt, 12));

  // The post-jump diffusion target is 0: the recorded loss equals psi with
  // zero post targets.
  {
    auto b = small_bundle(Scheme::kBase, 1, 6, 3);
    std::vector<sim::ObservationSequence> obs{random_path(1, 1, 4), random_path(2, 1, 2)};
    const auto tg = loss::build_targets(obs, Scheme::kBase);
    auto& m = b.models[1];
    std::vector<loss::PathResiduals> res;
    for (std::size_t p = 0; p < obs.size(); ++p) {
      const auto traj = njode::forward(m, obs[p], kGrid, 1, njode::Mode::kEval);
      loss::PathResiduals r;
      for (std::size_t i = 0; i < tg[p].n(); ++i) {
        const auto& o = tg[p].obs[i];
        r.pre.push_back(loss::masked_residual(o.z, traj.jumps[i].pre.cwiseAbs2(), o.z_mask));
        r.post.push_back(
            loss::masked_residual(Vec::Zero(1), traj.jumps[i].post.cwiseAbs2(), o.z_post_mask));
      }
      res.push_back(r);
    }
    const double d = std::abs(loss::psi(res) - eval_loss(m, options_for(Scheme::kBase, m), obs, tg));
    if (d > 1e-12) failures.push_back("post-jump Z target not 0 (" + fmt(d, 15) + ")");
  }

  // Quotient targets times the gap reproduce the increment targets.
  double worst_identity = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto tg = loss::build_targets(random_path(100 + seed, 2, 6), Scheme::kJointInstant);
    for (const auto& o : tg.obs) {
      for (int j = 0; j < 2; ++j) {
        if (o.iq_mask[j] != 0.0) {
          worst_identity = std::max(worst_identity, std::abs(o.iq[j] * o.gap[j] - o.increment[j]));
        }
      }
      for (Eigen::Index e = 0; e < 4; ++e) {
        if (o.zq_mask[e] != 0.0) {
          worst_identity = std::max(worst_identity, std::abs(o.zq[e] * o.z_gap[e] - o.z[e]));
        }
      }
    }
  }
  if (worst_identity > 1e-12) failures.push_back("quotient identity " + fmt(worst_identity, 15));

  // Non-negativity for every scheme, and zero on exact predictions.
  double min_loss = 0.0;
  for (Scheme s : {Scheme::kBase, Scheme::kJointBase, Scheme::kInstant, Scheme::kJointInstant}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto b = small_bundle(s, 2, 6, seed);
      std::vector<sim::ObservationSequence> obs{random_path(seed, 2, 4), random_path(seed + 50, 2, 3)};
      const auto tg = loss::build_targets(obs, s);
      for (auto& m : b.models) min_loss = std::min(min_loss, eval_loss(m, options_for(s, m), obs, tg));
    }
  }
  if (min_loss < 0.0) failures.push_back("negative loss");
  loss::PathResiduals exact;
  for (int i = 0; i < 3; ++i) {
    const Vec x = Vec::Constant(2, 1.5 + i);
    exact.pre.push_back(loss::masked_residual(x, x, Vec::Ones(2)));
    exact.post.push_back(loss::masked_residual(x, x, Vec::Ones(2)));
  }
  const std::vector<loss::PathResiduals> ex{exact};
  if (loss::psi(ex) != 0.0 || loss::psi_noisy(ex) != 0.0) failures.push_back("exact match not 0");

  std::string detail = "S asymmetry " + fmt(worst_asym, 1) + ", min eigenvalue " +
                       fmt(min_eig, 15) + ", psd_sqrt round trip " +
                       fmt(worst_sqrt * 1e12, 3) + "e-12, quotient identity " +
                       fmt(worst_identity * 1e15, 3) + "e-15";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

Outcome criterion7(const fs::path& dir) {
  auto run = [&](const std::string& name) {
    cli::RunConfig c = cli::gbm_defaults();
    c.seed = kSeed;
    c.out = (dir / name).string();
    fs::remove_all(c.out);
    std::ostringstream log;
    cli::cmd_reproduce(c, cli::Table::kTable1, 0.2, log);
    return io::read_text_file(dir / name / "table1" / "table.csv");
  };
  const auto t0 = std::chrono::steady_clock::now();
  const std::string a = run("reproduce_a");
  const std::string b = run("reproduce_b");
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {a == b && !a.empty(), std::string(a == b ? "identical" : "different") + " table.csv (" +
                                    std::to_string(a.size()) + " bytes), " + fmt(s, 0) + " s"};
}

Outcome criterion8() {
  std::vector<std::string> failures;
  auto rel = [](double v, double truth) { return std::abs(v - truth) / std::abs(truth); };
  const auto gbm =
      eval::estimate_gbm(sim::simulate_exact(sim::SdeSpec::gbm(2.0, 0.3, Vec::Ones(1)), 1.0, 0.01,
                                             20000, kSeed));
  const auto ou = eval::estimate_ou(sim::simulate_exact(
      sim::SdeSpec::ou(2.0, 3.0, 1.0, Vec::Ones(1)), 1.0, 0.01, 20000, kSeed));
  const double worst = std::max({rel(gbm.mu, 2.0), rel(gbm.sigma, 0.3), rel(ou.kappa, 2.0),
                                 rel(ou.theta, 3.0), rel(ou.sigma, 1.0)});
  if (worst > 0.02) failures.push_back("sampled estimates off by more than 2%");

  const auto gbm0 = eval::estimate_gbm(
      sim::simulate_exact(sim::SdeSpec::gbm(2.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 4, kSeed));
  const auto ou0 = eval::estimate_ou(
      sim::simulate_exact(sim::SdeSpec::ou(2.0, 3.0, 0.0, Vec::Ones(1)), 1.0, 0.01, 4, kSeed));
  const double exact = std::max({std::abs(gbm0.mu - 2.0), std::abs(gbm0.sigma),
                                 std::abs(ou0.kappa - 2.0), std::abs(ou0.theta - 3.0),
                                 std::abs(ou0.sigma)});
  if (exact > 1e-10) failures.push_back("noiseless recovery error " + fmt(exact, 15));

  std::string detail = "worst relative error " + fmt(100 * worst, 3) +
                       "% at 20000 paths (<= 2%), noiseless error " + fmt(exact * 1e10, 4) +
                       "e-10 (<= 1e-10)";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path workdir = fs::temp_directory_path() / "itogen_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream s(argv[++i]);
      std::string item;
      while (std::getline(s, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: itogen_acceptance [--workdir DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(workdir);
  DeskRuns runs(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle generator fidelity", criterion1},
      {"GBM Joint Instant end to end", [&] { return criterion2(runs); }},
      {"OU Joint Instant end to end", [&] { return criterion3(runs); }},
      {"Base vs Joint Instant bias ordering", [&] { return criterion4(runs); }},
      {"gradients match finite differences", criterion5},
      {"structural invariants", criterion6},
      {"reproduce determinism", [&] { return criterion7(workdir); }},
      {"estimator oracles", criterion8},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
