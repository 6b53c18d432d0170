#include "chanprune/compute.hpp"

#include <algorithm>
#include <ostream>

#include "chanprune/kernels.hpp"

namespace chanprune {

double unit_cost(const UnitGeometry& g, bool factor_two) {
  double macs = 0.0;
  switch (g.kind) {
    case LayerKind::Conv:
      macs = static_cast<double>(g.height * g.width * g.in_units * g.kernel * g.kernel);
      break;
    case LayerKind::Linear: macs = static_cast<double>(g.in_units); break;
    default: throw ConfigError("unit cost is defined for conv and linear layers only, got " + to_string(g.kind));
  }
  return factor_two ? 2.0 * macs : macs;
}

UnitGeometry unit_geometry(const std::vector<LayerSpec>& layers, const ActivationShape& input, std::size_t layer) {
  const auto shapes = infer_shapes(layers, input);
  const LayerSpec& l = layers.at(layer);
  if (!l.has_weights()) throw ConfigError("layer " + std::to_string(layer) + " (" + to_string(l.kind) + ") has no unit cost");
  UnitGeometry g;
  g.kind = l.kind;
  g.in_units = l.in_units;
  if (l.kind == LayerKind::Conv) {
    g.height = shapes[layer].height;
    g.width = shapes[layer].width;
    g.kernel = l.kernel;
  }
  return g;
}

std::vector<double> smooth_normalize(std::span<const double> costs, double lambda) {
  if (costs.empty()) throw ConfigError("cannot normalize an empty cost list");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  double total = 0.0;
  for (double c : costs) {
    if (!(c > 0.0)) throw ConfigError("costs must be positive");
    total += c + lambda;
  }
  std::vector<double> out;
  out.reserve(costs.size());
  for (double c : costs) out.push_back((c + lambda) / total);
  const double top = *std::max_element(out.begin(), out.end());
  for (double& c : out) c /= top;
  return out;
}

template <typename T>
CostTable cost_table(const ModelGraph<T>& model, double lambda) {
  CostTable table;
  table.lambda = lambda;
  table.layers = model.prunable_layers();
  if (table.layers.empty()) throw ConfigError("model has no prunable layers");
  for (std::size_t layer : table.layers) {
    UnitGeometry g;
    const LayerSpec& l = model.layer(layer);
    g.kind = l.kind;
    g.in_units = l.in_units;
    if (l.kind == LayerKind::Conv) {
      g.height = model.output_shapes()[layer].height;
      g.width = model.output_shapes()[layer].width;
      g.kernel = l.kernel;
    }
    table.geometry.push_back(g);
    table.raw.push_back(unit_cost(g));
  }
  table.normalized = smooth_normalize(table.raw, lambda);
  return table;
}

std::uint64_t layer_mac_flops(const LayerSpec& l, const ActivationShape& in, const ActivationShape& out) {
  (void)in;
  switch (l.kind) {
    case LayerKind::Conv:
      return 2ull * out.height * out.width * l.out_units * l.in_units * l.kernel * l.kernel;
    case LayerKind::Linear: return 2ull * l.out_units * l.in_units;
    default: return 0;
  }
}

std::uint64_t layer_flops(const LayerSpec& l, const ActivationShape& in, const ActivationShape& out) {
  switch (l.kind) {
    case LayerKind::Conv: return layer_mac_flops(l, in, out) + out.height * out.width * l.out_units;
    case LayerKind::Linear: return layer_mac_flops(l, in, out) + l.out_units;
    case LayerKind::BatchNorm: return 2ull * out.size();
    case LayerKind::Relu: return out.size();
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: return in.size();
    case LayerKind::Flatten: return 0;
  }
  return 0;
}

namespace {

template <typename F>
std::uint64_t sum_layers(const std::vector<LayerSpec>& layers, const ActivationShape& input, F per_layer) {
  const auto shapes = infer_shapes(layers, input);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) total += per_layer(layers[i], i == 0 ? input : shapes[i - 1], shapes[i]);
  return total;
}

}  // namespace

std::uint64_t total_flops(const std::vector<LayerSpec>& layers, const ActivationShape& input) {
  return sum_layers(layers, input, layer_flops);
}

std::uint64_t mac_flops(const std::vector<LayerSpec>& layers, const ActivationShape& input) {
  return sum_layers(layers, input, layer_mac_flops);
}

template <typename T>
std::uint64_t instrumented_macs(const ModelGraph<T>& model) {
  const ActivationShape& in = model.input_shape();
  Shape shape = in.flat ? Shape{1, in.channels} : Shape{1, in.channels, in.height, in.width};
  Tensor<T> x(shape, T{0});
  kernels::CounterScope scope;
  predict(model, x);
  return scope.delta().macs;
}

void write_flop_audit(std::ostream& os, const std::vector<LayerSpec>& before, const std::vector<LayerSpec>& after,
                      const ActivationShape& input) {
  if (before.size() != after.size()) throw ShapeError("audit needs the same layer list before and after surgery");
  const auto shapes_before = infer_shapes(before, input);
  const auto shapes_after = infer_shapes(after, input);
  os << "layer_index,kind,units_total,units_kept,unit_cost,layer_flops_before,layer_flops_after\n";
  for (std::size_t i = 0; i < before.size(); ++i) {
    const LayerSpec& b = before[i];
    const ActivationShape& in_b = i == 0 ? input : shapes_before[i - 1];
    const ActivationShape& in_a = i == 0 ? input : shapes_after[i - 1];
    const std::size_t total = b.has_weights() || b.kind == LayerKind::BatchNorm ? b.out_units : shapes_before[i].channels;
    const std::size_t kept = b.has_weights() || b.kind == LayerKind::BatchNorm ? after[i].out_units : shapes_after[i].channels;
    double cost = 0.0;
    if (b.has_weights()) cost = unit_cost(unit_geometry(before, input, i));
    os << i << ',' << to_string(b.kind) << ',' << total << ',' << kept << ',' << cost << ','
       << layer_flops(b, in_b, shapes_before[i]) << ',' << layer_flops(after[i], in_a, shapes_after[i]) << '\n';
  }
}

template CostTable cost_table<float>(const ModelGraph<float>&, double);
template CostTable cost_table<double>(const ModelGraph<double>&, double);
template std::uint64_t instrumented_macs<float>(const ModelGraph<float>&);
template std::uint64_t instrumented_macs<double>(const ModelGraph<double>&);

}  // namespace chanprune
