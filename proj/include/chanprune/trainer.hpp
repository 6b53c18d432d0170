#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanprune/dataio.hpp"
#include "chanprune/netgraph.hpp"

namespace chanprune {

struct TrainConfig {
  std::size_t epochs = 20;
  double lr = 0.1;
  std::vector<std::size_t> milestones = {10, 15};
  double decay = 0.5;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool augment = true;
  std::string precision = "float32";

  /// lr >= 0, milestones strictly increasing and below epochs.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// lr0 * decay^(number of milestones <= epoch); epochs count from 0.
double lr_at(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double seconds = 0.0;
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  std::optional<double> final_accuracy;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

/// Columns: epoch, train_loss, test_acc, epoch_seconds.
void write_metrics_csv(std::ostream& os, const RunMetrics& metrics);

/// SGD with momentum and coupled weight decay:
/// v = momentum * v + (g + wd * w); w -= lr * v.
template <typename T>
class Sgd {
 public:
  Sgd(const ModelGraph<T>& model, double momentum, double weight_decay);
  /// Reads gradients of every parameter leaf of `pass` from `tape`.
  void step(ModelGraph<T>& model, const Tape<T>& tape, const ForwardPass<T>& pass, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<std::vector<T>>> velocity_;  // layer -> {weight, bias, gamma, beta}
};

/// Binary mask per conv/linear weight (layer order); masked weights are held
/// at zero during training.
using WeightMasks = std::vector<std::vector<std::uint8_t>>;

struct TrainHooks {
  const Dataset* test = nullptr;       // evaluated after every epoch when set
  const WeightMasks* weight_masks = nullptr;
};

/// Trains in place. Deterministic per config.seed (shuffle and augmentation
/// draws). A non-finite loss or gradient aborts with the epoch index.
template <typename T>
RunMetrics train(ModelGraph<T>& model, const Dataset& data, const TrainConfig& config, const TrainHooks& hooks = {});

/// One SGD step on `batch`; returns the batch loss. Exposed for timing.
template <typename T>
double train_step(ModelGraph<T>& model, Sgd<T>& sgd, const Batch<T>& batch, double lr,
                  std::size_t* correct = nullptr);

/// Top-1 accuracy in eval mode; argmax ties go to the lower class index.
template <typename T>
double evaluate(const ModelGraph<T>& model, const Dataset& data, std::size_t batch_size = 256);

/// Mean seconds per training epoch over `measured` epochs after discarding
/// `warmup` epochs. Trains a copy of the model.
template <typename T>
double time_epoch(const ModelGraph<T>& model, const Dataset& data, const TrainConfig& config, std::size_t warmup,
                  std::size_t measured);

/// Wall-time of single training steps: median over `repeats` steps on one batch.
template <typename T>
double time_train_step(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t repeats = 5);

struct Aggregate {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  double se = 0.0;  // sd / sqrt(n)
};

Aggregate aggregate(std::span<const double> values);

}  // namespace chanprune
