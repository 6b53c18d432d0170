#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanprune/active.hpp"
#include "chanprune/dataio.hpp"
#include "chanprune/pruner.hpp"
#include "chanprune/trainer.hpp"

namespace chanprune::cli {

struct DataConfig {
  std::string name = "synthetic";  // synthetic | cifar10 | mnist
  std::string path;
  std::size_t train_size = 0;  // 0 = everything
  std::size_t test_size = 0;
  SyntheticConfig synthetic;
  std::size_t synthetic_test = 2000;
};

struct ValidateConfig {
  std::size_t batch_size = 128;
  std::size_t weight_stride = 97;
  std::size_t gradnorm_stride = 1;
};

struct ActiveConfig {
  double flop_target = 0.5;
  double budget_seconds = 60.0;
  std::size_t per_step = 50;
  std::size_t initial_per_class = 100;
  std::size_t round_epochs = 2;
};

/// Every knob of a run. At most one of ratio / flop_target is set; without
/// either (or with criterion "none") train and flops use the dense model.
struct ExperimentConfig {
  std::string preset = "tiny-vgg";
  double width = 1.0;
  DataConfig data;
  std::string criterion = "3sp";  // none | 3sp | 3sp-ca | snip | grasp | grasp-structured | uniform
  std::optional<double> ratio;
  std::optional<double> flop_target;
  double lambda = 0.0;
  double temperature = kGraspTemperature;
  InitPolicy init = InitPolicy::None;
  bool keep_at_least_one = true;
  std::size_t score_batch = 128;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {0};
  std::string out = "runs/latest";
  std::string checkpoint;  // eval / train --checkpoint
  ValidateConfig validate_approx;
  ActiveConfig active;

  bool prunes() const { return criterion != "none" && (ratio || flop_target); }
  bool unstructured() const { return criterion == "snip" || criterion == "grasp"; }

  void validate() const;
  /// Every field, defaults included.
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

DatasetPair load_data(const DataConfig& config);

/// Per-seed result: the row written to the aggregate and the seed's files.
struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  nlohmann::json values;  // numeric fields are aggregated across seeds
};

/// mean, se, sd, n for every numeric key present in all successful seeds.
nlohmann::json aggregate_results(const std::vector<SeedResult>& results);

/// Subcommands. Each writes <out>/resolved_config.json, <out>/seed_<s>/...
/// and <out>/aggregate.json; a seed that throws is recorded as failed.
std::vector<SeedResult> cmd_prune(const ExperimentConfig& config);
std::vector<SeedResult> cmd_train(const ExperimentConfig& config);
std::vector<SeedResult> cmd_eval(const ExperimentConfig& config);
std::vector<SeedResult> cmd_flops(const ExperimentConfig& config);
std::vector<SeedResult> cmd_validate_approx(const ExperimentConfig& config);
std::vector<SeedResult> cmd_active(const ExperimentConfig& config);

/// Dense model for the config and seed (He init from the seed).
template <typename T>
ModelGraph<T> initial_model(const ExperimentConfig& config, const ActivationShape& input, std::size_t classes,
                            std::uint64_t seed);

/// The scoring minibatch: score_batch class-balanced training examples.
template <typename T>
Batch<T> scoring_batch(const ExperimentConfig& config, const Dataset& train, std::uint64_t seed);

PruneConfig prune_config(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace chanprune::cli
