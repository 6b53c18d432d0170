// chanprune: structured pruning before training, from the command line.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "chanprune/errors.hpp"
#include "experiment.hpp"

using namespace chanprune;
using chanprune::cli::ExperimentConfig;

namespace {

struct Flags {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out, criterion, dataset, data_path, preset, checkpoint, precision;
  double ratio = 0.0, flop_target = 0.0, lambda = 0.0, width = 1.0, budget = 0.0;
  std::size_t epochs = 0, train_size = 0, test_size = 0, score_batch = 0;
  bool rescale = false, reinit = false, no_guard = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file; flags override its fields")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seeds, "run seed (repeatable)")->take_all();
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--criterion", f.criterion, "none|3sp|3sp-ca|snip|grasp|grasp-structured|uniform");
  auto* ratio = sub->add_option("--ratio", f.ratio, "fraction of units (or weights) to prune");
  sub->add_option("--flop-target", f.flop_target, "fraction of FLOPs to remove (searches the ratio)")->excludes(ratio);
  sub->add_option("--lambda", f.lambda, "Laplace smoothing of per-unit costs (3sp-ca)");
  auto* rs = sub->add_flag("--rescale", f.rescale, "scale surviving weights by sqrt(original/kept)");
  auto* ri = sub->add_flag("--reinit", f.reinit, "He re-initialize the pruned architecture");
  rs->excludes(ri);
  sub->add_flag("--no-guard", f.no_guard, "allow a layer to lose every unit");
  sub->add_option("--dataset", f.dataset, "synthetic|cifar10|mnist");
  sub->add_option("--data-path", f.data_path, "dataset directory");
  sub->add_option("--train-size", f.train_size, "class-balanced training subset (0 = all)");
  sub->add_option("--test-size", f.test_size, "class-balanced test subset (0 = all)");
  sub->add_option("--preset", f.preset, "vgg19|tiny-vgg|small-cnn|mlp");
  sub->add_option("--width", f.width, "width multiplier");
  sub->add_option("--epochs", f.epochs, "training epochs");
  sub->add_option("--precision", f.precision, "float32|float64");
  sub->add_option("--score-batch", f.score_batch, "scoring minibatch size");
  sub->add_option("--checkpoint", f.checkpoint, "checkpoint stem; {seed} expands per seed");
  sub->add_option("--budget", f.budget, "active learning wall-clock budget in seconds");
}

ExperimentConfig resolve(const CLI::App* sub, const Flags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(f.config + ": " + e.what());
    }
    c = ExperimentConfig::from_json(j);
  }
  auto given = [&](const char* name) { return sub->count(name) > 0; };
  if (given("--seed")) c.seeds = f.seeds;
  if (given("--out")) c.out = f.out;
  if (given("--criterion")) c.criterion = f.criterion;
  if (given("--ratio")) c.ratio = f.ratio, c.flop_target.reset();
  if (given("--flop-target")) c.flop_target = f.flop_target, c.ratio.reset();
  if (given("--lambda")) c.lambda = f.lambda;
  if (f.rescale) c.init = InitPolicy::Rescale;
  if (f.reinit) c.init = InitPolicy::Reinit;
  if (f.no_guard) c.keep_at_least_one = false;
  if (given("--dataset")) c.data.name = f.dataset;
  if (given("--data-path")) c.data.path = f.data_path;
  if (given("--train-size")) c.data.train_size = f.train_size;
  if (given("--test-size")) c.data.test_size = f.test_size;
  if (given("--preset")) c.preset = f.preset;
  if (given("--width")) c.width = f.width;
  if (given("--epochs")) {
    c.train.epochs = f.epochs;
    // keep milestones at the same fractions of the run
    c.train.milestones = {f.epochs / 2, f.epochs * 3 / 4};
    if (c.train.milestones[0] == 0 || c.train.milestones[1] <= c.train.milestones[0]) c.train.milestones.clear();
  }
  if (given("--precision")) c.train.precision = f.precision;
  if (given("--score-batch")) c.score_batch = f.score_batch;
  if (given("--checkpoint")) c.checkpoint = f.checkpoint;
  if (given("--budget")) c.active.budget_seconds = f.budget;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning before training"};
  app.require_subcommand(1);
  Flags flags;
  using Command = std::vector<cli::SeedResult> (*)(const ExperimentConfig&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands = {
      {"prune", "score, threshold and shrink a freshly initialized model", cli::cmd_prune},
      {"train", "train a dense, pruned or checkpointed model", cli::cmd_train},
      {"eval", "test accuracy of a checkpoint", cli::cmd_eval},
      {"flops", "per-example FLOPs and parameters", cli::cmd_flops},
      {"validate-approx", "predicted vs actual loss change of removing units and weights", cli::cmd_validate_approx},
      {"active-learn", "entropy acquisition with the full and a pruned model under one budget", cli::cmd_active},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_flags(sub, flags);
    subs.emplace_back(sub, fn);
  }
  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, fn] : subs) {
    if (!sub->parsed()) continue;
    try {
      const auto config = resolve(sub, flags);
      const auto results = fn(config);
      std::size_t failed = 0;
      for (const auto& r : results) failed += !r.ok;
      std::cout << sub->get_name() << ": " << results.size() - failed << "/" << results.size()
                << " seeds completed; outputs in " << config.out << '\n';
      if (failed) {
        std::cerr << "failed seeds:";
        for (const auto& r : results)
          if (!r.ok) std::cerr << ' ' << r.seed;
        std::cerr << '\n';
        return 1;
      }
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }
  return 2;
}
