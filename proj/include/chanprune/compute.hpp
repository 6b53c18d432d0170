#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "chanprune/netgraph.hpp"

namespace chanprune {

/// Geometry that determines the cost of one output unit. For conv layers
/// height/width are the output extent; linear layers use H = W = K = 1.
struct UnitGeometry {
  LayerKind kind = LayerKind::Conv;
  std::size_t in_units = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 1;
};

/// FLOPs to produce one output unit: 2*H*W*Cin*K^2 (conv), 2*F (linear).
/// With factor_two = false the multiply-accumulate count is returned instead.
double unit_cost(const UnitGeometry& g, bool factor_two = true);

UnitGeometry unit_geometry(const std::vector<LayerSpec>& layers, const ActivationShape& input, std::size_t layer);

/// c_bar = (c + lambda) / sum(c + lambda); c_tilde = c_bar / max(c_bar).
std::vector<double> smooth_normalize(std::span<const double> costs, double lambda);

struct CostTable {
  std::vector<std::size_t> layers;  // prunable layer indices, MaskSet order
  std::vector<UnitGeometry> geometry;
  std::vector<double> raw;          // c per layer
  std::vector<double> normalized;   // c_tilde per layer
  double lambda = 0.0;
};

template <typename T>
CostTable cost_table(const ModelGraph<T>& model, double lambda);

/// Per-example FLOPs of one layer. Conv: 2*H'W'*Cout*Cin*K^2 + H'W'*Cout,
/// linear: 2*U*F + U, batchnorm 2 per element, relu 1 per element, pooling one
/// per input element read, flatten 0.
std::uint64_t layer_flops(const LayerSpec& layer, const ActivationShape& in, const ActivationShape& out);

/// Only the multiply-accumulate part of conv/linear layers, times two.
std::uint64_t layer_mac_flops(const LayerSpec& layer, const ActivationShape& in, const ActivationShape& out);

std::uint64_t total_flops(const std::vector<LayerSpec>& layers, const ActivationShape& input);
std::uint64_t mac_flops(const std::vector<LayerSpec>& layers, const ActivationShape& input);

template <typename T>
std::uint64_t total_flops(const ModelGraph<T>& model) {
  return total_flops(model.layers(), model.input_shape());
}
template <typename T>
std::uint64_t mac_flops(const ModelGraph<T>& model) {
  return mac_flops(model.layers(), model.input_shape());
}

/// Multiply-accumulates counted by the gemm instrumentation during one
/// forward pass of a single example.
template <typename T>
std::uint64_t instrumented_macs(const ModelGraph<T>& model);

/// Audit of a model before and after surgery (same layer list, shrunken widths).
/// Columns: layer_index, kind, units_total, units_kept, unit_cost,
/// layer_flops_before, layer_flops_after.
void write_flop_audit(std::ostream& os, const std::vector<LayerSpec>& before, const std::vector<LayerSpec>& after,
                      const ActivationShape& input);

}  // namespace chanprune
