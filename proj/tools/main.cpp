#include "commands.hpp"
#include "config.hpp"

#include "itogen/errors.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kData = 3,
  kDivergence = 4,
  kEstimationDomain = 5,
};

struct Flags {
  std::string config;
  std::string process = "gbm";
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> scheme;
  std::string checkpoint;
  std::string table = "table1";
  double scale = 1.0;
  std::vector<std::string> datasets;
};

// Precedence: config file < ITOGEN_SEED < command-line flag.
itogen::cli::RunConfig resolve(const Flags& f) {
  using namespace itogen::cli;
  RunConfig c;
  if (!f.config.empty()) {
    c = load_config(f.config);
  } else if (f.process == "ou") {
    c = ou_defaults();
  } else if (f.process == "gbm") {
    c = gbm_defaults();
  } else {
    throw itogen::ConfigError("--process must be gbm or ou");
  }
  if (const char* env = std::getenv("ITOGEN_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw itogen::ConfigError(std::string("ITOGEN_SEED is not an unsigned integer: ") + env);
    }
  }
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.threads) c.threads = *f.threads;
  if (f.scheme) c.train.scheme = itogen::scheme_from_string(*f.scheme);
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn Ito drift and diffusion with Neural Jump ODEs and generate new paths"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--process", f.process, "Built-in defaults when no config is given")
        ->check(CLI::IsMember({"gbm", "ou"}));
    sub->add_option("--out", f.out, "Output directory");
    sub->add_option("--seed", f.seed, "Global seed (overrides ITOGEN_SEED and config)");
    sub->add_option("--threads", f.threads, "Worker thread cap (0 = hardware)");
  };

  auto* simulate = app.add_subcommand("simulate", "Simulate and observe a dataset");
  auto* train = app.add_subcommand("train", "Train the NJODE model(s) of one scheme");
  auto* generate = app.add_subcommand("generate", "Generate paths from a checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Estimate parameters and compare marginals");
  auto* reproduce = app.add_subcommand("reproduce", "Run a full table experiment");
  auto* plot = app.add_subcommand("plot", "Write SVG and CSV plot files");
  for (auto* sub : {simulate, train, generate, evaluate, reproduce, plot}) common(sub);
  for (auto* sub : {train, reproduce}) {
    sub->add_option("--scheme", f.scheme, "Training scheme")
        ->check(CLI::IsMember({"base", "joint-base", "instant", "joint-instant"}));
  }
  generate->add_option("--checkpoint", f.checkpoint, "Checkpoint directory (default: <out>/model)");
  evaluate->add_option("datasets", f.datasets, "Reference and candidate dataset directories");
  reproduce->add_option("--table", f.table, "table1 (GBM) or table2 (OU)")
      ->check(CLI::IsMember({"table1", "table2"}));
  reproduce->add_option("--scale", f.scale, "Scale of path counts and epochs (0 = plan only)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  using namespace itogen::cli;
  try {
    const RunConfig c = resolve(f);
    if (simulate->parsed()) cmd_simulate(c, std::cout);
    if (train->parsed()) cmd_train(c, std::cout);
    if (generate->parsed()) cmd_generate(c, f.checkpoint, std::cout);
    if (evaluate->parsed()) {
      std::vector<std::filesystem::path> ds(f.datasets.begin(), f.datasets.end());
      cmd_evaluate(c, ds, std::cout);
    }
    if (reproduce->parsed()) cmd_reproduce(c, table_from_string(f.table), f.scale, std::cout);
    if (plot->parsed()) cmd_plot(c, std::cout);
  } catch (const itogen::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const itogen::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const itogen::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const itogen::EstimationDomainError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kEstimationDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOk;
}
