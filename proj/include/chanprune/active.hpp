#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "chanprune/dataio.hpp"
#include "chanprune/netgraph.hpp"
#include "chanprune/trainer.hpp"

namespace chanprune {

/// -sum p log p of one probability row (0 log 0 = 0).
double entropy(std::span<const double> probs);

/// Softmax entropy of the model's prediction for each `indices` example.
template <typename T>
std::vector<double> entropy_scores(const ModelGraph<T>& model, const Dataset& data,
                                   std::span<const std::size_t> indices, std::size_t batch_size = 256);

/// Positions of the k largest scores; ties go to the lower position.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

struct AcquisitionConfig {
  double budget_seconds = 60.0;
  std::size_t per_step = 50;
  std::size_t initial_per_class = 100;
  /// Training run between acquisitions (continues from the current weights).
  TrainConfig round_train;
  std::uint64_t seed = 0;
};

struct TracePoint {
  std::size_t round = 0;
  double wall_seconds = 0.0;
  std::size_t labeled = 0;
  double test_accuracy = 0.0;
};

struct AcquisitionState {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> pool;
  double elapsed = 0.0;
  std::size_t acquisitions = 0;  // acquisition steps finished within the budget
  bool pool_exhausted = false;
  std::vector<TracePoint> trace;

  /// Accuracy of the last trace point inside the budget (the first point if none is).
  double final_accuracy(double budget_seconds) const;
};

/// Builds the model for a given initial labeled set (pruning happens here,
/// before the clock starts).
template <typename T>
using ModelFactory = std::function<ModelGraph<T>(const Dataset& initial)>;

/// Timer starts after the initial set is drawn and the factory returns.
/// Each round trains on the labeled set, then (budget permitting) labels the
/// per_step highest-entropy pool examples. Test evaluation is excluded from
/// the clock. Trace points are taken after every training round.
template <typename T>
AcquisitionState acquisition_loop(const ModelFactory<T>& factory, const Dataset& train, const Dataset& test,
                                  const AcquisitionConfig& config);

/// Columns: variant, round, wall_seconds, labeled_count, test_accuracy.
void write_trace_csv(std::ostream& os, const std::string& variant, const AcquisitionState& state, bool header = true);

}  // namespace chanprune
