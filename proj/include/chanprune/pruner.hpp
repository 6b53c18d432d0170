#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanprune/compute.hpp"
#include "chanprune/scoring.hpp"

namespace chanprune {

struct ThresholdOptions {
  /// Restore the best unit of any layer that would lose every unit, pruning
  /// the next-lowest entries elsewhere so the prune count stays exact.
  bool keep_at_least_one = false;
};

struct Selection {
  MaskSet masks;
  double threshold = 0.0;  // prune_count-th smallest score (nearest rank); -inf when nothing is pruned
  std::size_t prune_count = 0;
};

/// Pools every score, prunes exactly floor(p * N) entries: everything below
/// the threshold plus ties at the threshold in ascending (layer, unit) order.
Selection threshold_select(const ScoreSet& scores, double p, const ThresholdOptions& options = {});

/// Layer specs after removing the masked units and their dependents.
/// Throws DisconnectionError naming the first layer left without units.
std::vector<LayerSpec> shrunk_layers(const std::vector<LayerSpec>& layers, const ActivationShape& input,
                                     const MaskSet& masks);

/// Physically removes masked units: output slices of the layer, its bias and
/// the following batchnorm entries (running stats carried over), and the
/// matching input slices of the next conv/linear layer. Across flatten,
/// channel c owns features [c*H*W, (c+1)*H*W).
template <typename T>
ModelGraph<T> shrink(const ModelGraph<T>& model, const MaskSet& masks);

/// Multiplies each shrunken layer's weights by sqrt(original units / kept units).
template <typename T>
ModelGraph<T> rescale(ModelGraph<T> model);

/// Fresh He initialization of the (shrunken) architecture.
template <typename T>
ModelGraph<T> reinit(ModelGraph<T> model, std::uint64_t seed);

enum class InitPolicy { None, Rescale, Reinit };
std::string to_string(InitPolicy policy);
InitPolicy init_policy_from_string(const std::string& name);

struct LayerCount {
  std::size_t layer = 0;
  std::string kind;
  std::size_t kept = 0;
  std::size_t total = 0;
};

struct PruneReport {
  std::string criterion;
  double ratio = 0.0;
  std::optional<double> lambda;
  std::optional<double> flop_target;
  std::size_t search_iterations = 0;
  double threshold = 0.0;
  std::size_t units_total = 0;
  std::size_t units_pruned = 0;
  std::vector<LayerCount> layers;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  double prune_ms = 0.0;
  std::string init_policy = "none";
  bool disconnected = false;
  std::optional<std::size_t> disconnected_layer;

  nlohmann::json to_json() const;
};

/// Searches p in [0, 1) so the shrunken model's FLOP reduction is within 1%
/// (relative) of `target`, re-thresholding the fixed score set. At most 20
/// bisection steps; ConfigError if the target cannot be met.
struct FlopSearch {
  double ratio = 0.0;
  Selection selection;
  double achieved = 0.0;
  std::size_t iterations = 0;
};

template <typename T>
FlopSearch search_flop_target(const ModelGraph<T>& model, const ScoreSet& scores, double target,
                              const ThresholdOptions& options = {});

/// Fraction of FLOPs removed by `masks`; throws DisconnectionError like shrink.
template <typename T>
double flop_reduction(const ModelGraph<T>& model, const MaskSet& masks);

struct PruneConfig {
  std::string criterion = "3sp";  // 3sp | 3sp-ca | grasp-structured | uniform
  std::optional<double> ratio;
  std::optional<double> flop_target;
  double lambda = 0.0;
  double temperature = kGraspTemperature;
  InitPolicy init = InitPolicy::None;
  std::uint64_t seed = 0;
  bool keep_at_least_one = false;
};

template <typename T>
struct PruneOutcome {
  ModelGraph<T> model;
  MaskSet masks;
  ScoreSet raw_scores;        // empty for uniform
  ScoreSet ranking_scores;    // the scores actually thresholded
  CostTable costs;
  PruneReport report;
};

/// score -> threshold (or FLOP search) -> shrink -> rescale/reinit, timed.
/// A disconnection is reported (report.disconnected) and rethrown.
template <typename T>
PruneOutcome<T> prune(const ModelGraph<T>& model, const Batch<T>& batch, const PruneConfig& config);

/// Unstructured selection over weight scores: exactly floor(p * N) weights
/// get mask 0, same tie rule as threshold_select.
std::vector<std::vector<std::uint8_t>> threshold_select_weights(const WeightScores& scores, double p);

}  // namespace chanprune
