#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chanprune/dataio.hpp"
#include "chanprune/netgraph.hpp"
#include "chanprune/scoring.hpp"

namespace chanprune {

/// One ablated unit (structured) or weight (unstructured; `unit` is the flat
/// weight index). Predicted and actual are signed changes on the same batch.
struct AblationRecord {
  std::size_t layer = 0;
  std::size_t unit = 0;
  double predicted = 0.0;
  double actual = 0.0;
  std::string batch_id;
};

/// Mean cross-entropy in eval mode, optionally masked.
template <typename T>
double batch_loss(const ModelGraph<T>& model, const Batch<T>& batch, const MaskSet* masks = nullptr,
                  double temperature = 1.0);

/// ||dL/dw||^2 over conv/linear weights in eval mode, optionally masked.
template <typename T>
double gradnorm_sq(const ModelGraph<T>& model, const Batch<T>& batch, const MaskSet* masks = nullptr,
                   double temperature = 1.0);

/// L(unit masked) - L(all ones), eval-mode batchnorm.
template <typename T>
double actual_delta_loss(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer, std::size_t unit);

/// L(weight zeroed) - L(original) for one conv/linear weight.
template <typename T>
double actual_delta_loss_weight(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer,
                                std::size_t index);

/// ||g||^2 with the unit masked minus ||g||^2 unmasked.
template <typename T>
double actual_delta_gradnorm(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer, std::size_t unit,
                             double temperature = 1.0);

/// Same for one zeroed weight; the ablated weight's own gradient is left out
/// of the masked norm, since the weight no longer exists.
template <typename T>
double actual_delta_gradnorm_weight(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t layer,
                                    std::size_t index, double temperature = 1.0);

/// Spearman rho with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct PlotRow {
  std::size_t rank = 0;
  double predicted = 0.0;  // min-max normalized
  double actual = 0.0;     // min-max normalized
};

struct Correlation {
  double rho = 0.0;
  std::size_t n = 0;
  std::vector<PlotRow> rows;  // sorted by predicted, ascending
};

/// Needs at least 10 records and two distinct values on each side.
Correlation rank_correlation(std::span<const AblationRecord> records);

/// First-order study over every prunable unit: predicted = -dL/dm (the
/// signed loss change of removing the unit), actual = exact ablation.
template <typename T>
std::vector<AblationRecord> study_structured_loss(const ModelGraph<T>& model, const Batch<T>& batch,
                                                  const std::string& batch_id = "scoring");

/// Unstructured study on every `stride`-th conv/linear weight (global flat
/// order): predicted = -w * dL/dw.
template <typename T>
std::vector<AblationRecord> study_unstructured_loss(const ModelGraph<T>& model, const Batch<T>& batch,
                                                    std::size_t stride, const std::string& batch_id = "scoring");

/// Structured gradient-flow study: predicted = -2 * structured GraSP score,
/// actual = delta ||g||^2. `unit_stride` > 1 subsamples units.
template <typename T>
std::vector<AblationRecord> study_structured_gradnorm(const ModelGraph<T>& model, const Batch<T>& batch,
                                                      double temperature, std::size_t unit_stride = 1,
                                                      const std::string& batch_id = "scoring");

struct PairRecord {
  std::size_t layer_a = 0, unit_a = 0, layer_b = 0, unit_b = 0;
  double delta_a = 0.0, delta_b = 0.0, delta_both = 0.0;
  double interaction() const { return delta_both - delta_a - delta_b; }
};

/// Random unit pairs: delta loss of removing both vs the sum of singles.
template <typename T>
std::vector<PairRecord> additivity_pairs(const ModelGraph<T>& model, const Batch<T>& batch, std::size_t pairs,
                                         std::uint64_t seed);

/// Columns: layer_index, unit_index, predicted, actual, batch_id.
void write_records_csv(std::ostream& os, std::span<const AblationRecord> records);
/// Columns: rank, predicted_normalized, actual_normalized.
void write_calibration_csv(std::ostream& os, const Correlation& corr);
/// Columns: layer_a, unit_a, layer_b, unit_b, delta_a, delta_b, delta_both, interaction.
void write_pairs_csv(std::ostream& os, std::span<const PairRecord> pairs);

}  // namespace chanprune
