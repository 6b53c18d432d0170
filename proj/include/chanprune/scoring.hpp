#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chanprune/compute.hpp"
#include "chanprune/dataio.hpp"
#include "chanprune/netgraph.hpp"

namespace chanprune {

/// Per prunable layer scores aligned with MaskSet slots. Higher = keep.
struct ScoreSet {
  std::string criterion;
  std::vector<std::size_t> layers;
  std::vector<std::vector<double>> values;
  std::uint64_t batch_seed = 0;
  std::size_t batch_size = 0;
  double temperature = 1.0;
  std::optional<double> lambda;

  std::size_t total() const;
};

struct ScoreOptions {
  /// Keep the sign of dL/dm instead of taking the absolute value.
  bool keep_sign = false;
  /// Divide every score by the sum of all absolute scores.
  bool normalize = false;
};

/// dL/dm at m = 1 for every prunable unit from one forward and one backward
/// pass on `batch`; |.| unless keep_sign. Batchnorm runs in eval mode.
template <typename T>
ScoreSet score_3sp(const ModelGraph<T>& model, const Batch<T>& batch, const ScoreOptions& options = {});

/// Per-weight w * dL/dw for every conv/linear weight tensor (signed).
struct WeightScores {
  std::vector<std::size_t> layers;
  std::vector<std::vector<double>> values;
};

template <typename T>
WeightScores score_snip_unstructured(const ModelGraph<T>& model, const Batch<T>& batch, bool keep_sign = false);

enum class Granularity { Unstructured, Structured };

inline constexpr double kGraspTemperature = 200.0;
/// Relative finite-difference step for Hessian-vector products. Steps near
/// 1e-3 cross relu kinks and stop measuring curvature.
inline constexpr double kHvpStep = 1e-6;

/// Gradient-flow scores. Unstructured: theta * (H g) per conv/linear weight;
/// structured: (H_mw g) per mask entry, half the derivative of ||dL/dw||^2
/// with respect to the mask at m = 1. Removing an element changes ||g||^2 by
/// about -2 * score, so keeping high scores keeps the elements whose removal
/// would cost the most gradient flow.
struct GraspScores {
  ScoreSet structured;       // filled for Granularity::Structured
  WeightScores unstructured;  // filled for Granularity::Unstructured
};

template <typename T>
GraspScores score_grasp(const ModelGraph<T>& model, const Batch<T>& batch, double temperature,
                        Granularity granularity);

/// Conv/linear weight tensors concatenated in layer order, and the inverse.
template <typename T>
std::vector<T> flat_weights(const ModelGraph<T>& model);
template <typename T>
void set_flat_weights(ModelGraph<T>& model, std::span<const T> values);

/// Signed dL/dm at m = 1 (mask entries from `masks`, or ones), flattened in
/// slot order, with the loss at the given softmax temperature.
template <typename T>
std::vector<T> mask_gradient(const ModelGraph<T>& model, const Batch<T>& batch, double temperature = 1.0,
                             const MaskSet* masks = nullptr);

/// Gradient of the mean loss over conv/linear weights (flattened, layer order).
template <typename T>
std::vector<T> weight_gradient(const ModelGraph<T>& model, const Batch<T>& batch, double temperature = 1.0,
                               const MaskSet* masks = nullptr);

/// (grad(theta + eps v) - grad(theta - eps v)) / (2 eps) with
/// eps = step * ||theta|| / ||v||. `grad` maps a parameter vector to any
/// gradient-like vector, so mixed second derivatives work too.
template <typename T, typename GradFn>
std::vector<T> fd_hessian_vector(const std::vector<T>& theta, const std::vector<T>& v, GradFn&& grad,
                                 double step = kHvpStep);

/// R = |g| / c_tilde of the unit's layer.
ScoreSet retention_scores(const ScoreSet& scores, const CostTable& costs);

/// Each entry independently 0 with probability p.
template <typename T>
MaskSet uniform_mask(const ModelGraph<T>& model, double p, std::uint64_t seed);

/// Columns: layer_index, unit_index, raw_score, cost, retention_score, kept.
void write_score_dump(std::ostream& os, const ScoreSet& raw, const CostTable& costs, const ScoreSet& retention,
                      const MaskSet& masks);

// ---------------------------------------------------------------------------

template <typename T, typename GradFn>
std::vector<T> fd_hessian_vector(const std::vector<T>& theta, const std::vector<T>& v, GradFn&& grad, double step) {
  if (theta.size() != v.size()) throw ShapeError("hessian-vector product: size mismatch");
  double nt = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    nt += double(theta[i]) * theta[i];
    nv += double(v[i]) * v[i];
  }
  nt = std::sqrt(nt);
  nv = std::sqrt(nv);
  if (nv == 0.0) return std::vector<T>(grad(theta).size(), T{0});
  const double eps = step * std::max(nt, 1e-12) / nv;
  std::vector<T> probe(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) probe[i] = static_cast<T>(theta[i] + eps * v[i]);
  const std::vector<T> gp = grad(probe);
  for (std::size_t i = 0; i < theta.size(); ++i) probe[i] = static_cast<T>(theta[i] - eps * v[i]);
  const std::vector<T> gm = grad(probe);
  std::vector<T> hv(gp.size());
  for (std::size_t i = 0; i < hv.size(); ++i) {
    hv[i] = static_cast<T>((double(gp[i]) - double(gm[i])) / (2.0 * eps));
    if (!std::isfinite(double(hv[i]))) throw NumericalError("non-finite hessian-vector product");
  }
  return hv;
}

}  // namespace chanprune
