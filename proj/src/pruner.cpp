#include "chanprune/pruner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace chanprune {

namespace {

struct Entry {
  double value;
  std::size_t slot;
  std::size_t unit;
};

std::size_t prune_count_for(double p, std::size_t n) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("prune ratio must be in [0, 1)");
  return static_cast<std::size_t>(std::floor(p * double(n) + 1e-9));
}

std::vector<Entry> sorted_entries(const std::vector<std::vector<double>>& values) {
  std::vector<Entry> entries;
  for (std::size_t s = 0; s < values.size(); ++s) {
    for (std::size_t u = 0; u < values[s].size(); ++u) {
      if (std::isnan(values[s][u])) throw NumericalError("NaN score");
      entries.push_back({values[s][u], s, u});
    }
  }
  if (entries.empty()) throw ConfigError("empty score pool");
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.value < b.value; });
  return entries;
}

}  // namespace

Selection threshold_select(const ScoreSet& scores, double p, const ThresholdOptions& options) {
  const auto entries = sorted_entries(scores.values);
  Selection sel;
  sel.prune_count = prune_count_for(p, entries.size());
  sel.masks.layers = scores.layers;
  for (const auto& v : scores.values) sel.masks.keep.emplace_back(v.size(), std::uint8_t{1});
  sel.threshold = sel.prune_count ? entries[sel.prune_count - 1].value : -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < sel.prune_count; ++k) sel.masks.keep[entries[k].slot][entries[k].unit] = 0;
  if (!options.keep_at_least_one) return sel;

  std::size_t owed = 0;
  for (std::size_t s = 0; s < scores.values.size(); ++s) {
    if (sel.masks.kept_in(s) > 0) continue;
    // the best unit of the layer is its last entry in ascending order
    for (std::size_t k = sel.prune_count; k-- > 0;) {
      if (entries[k].slot == s) {
        sel.masks.keep[s][entries[k].unit] = 1;
        ++owed;
        break;
      }
    }
  }
  for (std::size_t k = sel.prune_count; k < entries.size() && owed > 0; ++k) {
    const Entry& e = entries[k];
    if (sel.masks.kept_in(e.slot) < 2) continue;
    sel.masks.keep[e.slot][e.unit] = 0;
    sel.threshold = e.value;
    --owed;
  }
  if (owed > 0) throw ConfigError("cannot keep one unit per layer at this prune ratio");
  return sel;
}

std::vector<std::vector<std::uint8_t>> threshold_select_weights(const WeightScores& scores, double p) {
  const auto entries = sorted_entries(scores.values);
  const std::size_t count = prune_count_for(p, entries.size());
  std::vector<std::vector<std::uint8_t>> keep;
  for (const auto& v : scores.values) keep.emplace_back(v.size(), std::uint8_t{1});
  for (std::size_t k = 0; k < count; ++k) keep[entries[k].slot][entries[k].unit] = 0;
  return keep;
}

// ---------------------------------------------------------------------------
// surgery

namespace {

struct SurgeryPlan {
  std::vector<LayerSpec> layers;
  std::vector<std::vector<std::size_t>> outputs;  // surviving units of each conv/linear layer
};

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

SurgeryPlan plan_surgery(const std::vector<LayerSpec>& layers, const ActivationShape& input, const MaskSet& masks) {
  const auto shapes = infer_shapes(layers, input);
  std::vector<std::size_t> prunable;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].prunable) prunable.push_back(i);
  if (masks.layers != prunable) throw ShapeError("mask set does not match the model's prunable layers");

  SurgeryPlan plan;
  plan.layers = layers;
  plan.outputs.resize(layers.size());
  std::size_t width = input.channels;  // surviving channels or features flowing in
  std::size_t slot = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = plan.layers[i];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Linear: {
        std::vector<std::size_t> out;
        if (l.prunable) {
          const auto& keep = masks.keep[slot++];
          if (keep.size() != l.out_units) {
            throw ShapeError("mask length " + std::to_string(keep.size()) + " does not match width " +
                             std::to_string(l.out_units) + " of layer " + std::to_string(i));
          }
          for (std::size_t u = 0; u < keep.size(); ++u)
            if (keep[u]) out.push_back(u);
        } else {
          out = iota_vec(l.out_units);
        }
        if (out.empty()) throw DisconnectionError(i);
        l.in_units = width;
        l.out_units = width = out.size();
        plan.outputs[i] = std::move(out);
        break;
      }
      case LayerKind::BatchNorm: l.in_units = l.out_units = width; break;
      case LayerKind::Flatten: {
        const ActivationShape in = i == 0 ? input : shapes[i - 1];
        if (!in.flat) width *= in.height * in.width;
        break;
      }
      default: break;
    }
  }
  return plan;
}

}  // namespace

std::vector<LayerSpec> shrunk_layers(const std::vector<LayerSpec>& layers, const ActivationShape& input,
                                     const MaskSet& masks) {
  return plan_surgery(layers, input, masks).layers;
}

template <typename T>
ModelGraph<T> shrink(const ModelGraph<T>& model, const MaskSet& masks) {
  const auto& src_layers = model.layers();
  const auto shapes = model.output_shapes();
  SurgeryPlan plan = plan_surgery(src_layers, model.input_shape(), masks);
  ModelGraph<T> out(plan.layers, model.input_shape());

  // original indices of the channels/features currently flowing
  std::vector<std::size_t> flowing = iota_vec(model.input_shape().channels);
  for (std::size_t i = 0; i < src_layers.size(); ++i) {
    const LayerSpec& l = src_layers[i];
    const LayerParams<T>& p = model.params()[i];
    LayerParams<T>& q = out.params()[i];
    const ActivationShape in = i == 0 ? model.input_shape() : shapes[i - 1];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Linear: {
        const auto& outs = plan.outputs[i];
        const std::size_t area = l.kind == LayerKind::Conv ? l.kernel * l.kernel : 1;
        for (std::size_t o = 0; o < outs.size(); ++o) {
          for (std::size_t c = 0; c < flowing.size(); ++c) {
            const T* s = p.weight.ptr() + (outs[o] * l.in_units + flowing[c]) * area;
            std::copy_n(s, area, q.weight.ptr() + (o * flowing.size() + c) * area);
          }
          q.bias[o] = p.bias[outs[o]];
        }
        std::vector<std::uint8_t> kept(l.out_units, 0);
        for (std::size_t o : outs) kept[o] = 1;
        if (!l.kept.empty()) {
          // compose with an earlier surgery so the record stays relative to the original layer
          std::vector<std::uint8_t> composed(l.kept.size(), 0);
          std::size_t k = 0;
          for (std::size_t u = 0; u < l.kept.size(); ++u)
            if (l.kept[u]) composed[u] = kept[k++];
          kept = std::move(composed);
        }
        if (outs.size() != l.out_units || !l.kept.empty()) {
          out.set_pruning_record(i, l.original_units ? l.original_units : l.out_units, std::move(kept));
        }
        flowing = outs;
        break;
      }
      case LayerKind::BatchNorm:
        for (std::size_t c = 0; c < flowing.size(); ++c) {
          q.gamma[c] = p.gamma[flowing[c]];
          q.beta[c] = p.beta[flowing[c]];
          q.running_mean[c] = p.running_mean[flowing[c]];
          q.running_var[c] = p.running_var[flowing[c]];
        }
        break;
      case LayerKind::Flatten: {
        const std::size_t plane = in.flat ? 1 : in.height * in.width;
        std::vector<std::size_t> features;
        for (std::size_t c : flowing)
          for (std::size_t k = 0; k < plane; ++k) features.push_back(c * plane + k);
        flowing = std::move(features);
        break;
      }
      default: break;
    }
  }
  return out;
}

template <typename T>
ModelGraph<T> rescale(ModelGraph<T> model) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerSpec& l = model.layer(i);
    if (!l.has_weights() || l.kept.empty()) continue;
    if (l.out_units == 0) throw DisconnectionError(i);
    const T factor = static_cast<T>(std::sqrt(double(l.original_units) / double(l.out_units)));
    for (T& w : model.params()[i].weight.data()) w *= factor;
  }
  return model;
}

template <typename T>
ModelGraph<T> reinit(ModelGraph<T> model, std::uint64_t seed) {
  he_init(model, seed);
  return model;
}

std::string to_string(InitPolicy policy) {
  switch (policy) {
    case InitPolicy::None: return "none";
    case InitPolicy::Rescale: return "rescale";
    case InitPolicy::Reinit: return "reinit";
  }
  return "none";
}

InitPolicy init_policy_from_string(const std::string& name) {
  if (name == "none") return InitPolicy::None;
  if (name == "rescale") return InitPolicy::Rescale;
  if (name == "reinit") return InitPolicy::Reinit;
  throw ConfigError("unknown init policy '" + name + "'");
}

nlohmann::json PruneReport::to_json() const {
  nlohmann::json j;
  j["criterion"] = criterion;
  j["ratio"] = ratio;
  j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
  j["flop_target"] = flop_target ? nlohmann::json(*flop_target) : nlohmann::json(nullptr);
  j["search_iterations"] = search_iterations;
  j["threshold"] = std::isfinite(threshold) ? nlohmann::json(threshold) : nlohmann::json(nullptr);
  j["units_total"] = units_total;
  j["units_pruned"] = units_pruned;
  auto& arr = j["layers"] = nlohmann::json::array();
  for (const auto& l : layers) arr.push_back({{"layer", l.layer}, {"kind", l.kind}, {"kept", l.kept}, {"total", l.total}});
  j["params_before"] = params_before;
  j["params_after"] = params_after;
  j["flops_before"] = flops_before;
  j["flops_after"] = flops_after;
  j["flop_reduction"] = flops_before ? 1.0 - double(flops_after) / double(flops_before) : 0.0;
  j["prune_ms"] = prune_ms;
  j["init_policy"] = init_policy;
  j["disconnected"] = disconnected;
  j["disconnected_layer"] = disconnected_layer ? nlohmann::json(*disconnected_layer) : nlohmann::json(nullptr);
  return j;
}

template <typename T>
double flop_reduction(const ModelGraph<T>& model, const MaskSet& masks) {
  const auto before = total_flops(model);
  const auto after = total_flops(shrunk_layers(model.layers(), model.input_shape(), masks), model.input_shape());
  return 1.0 - double(after) / double(before);
}

template <typename T>
FlopSearch search_flop_target(const ModelGraph<T>& model, const ScoreSet& scores, double target,
                              const ThresholdOptions& options) {
  if (!(target > 0.0 && target < 1.0)) throw ConfigError("FLOP reduction target must be in (0, 1)");
  double lo = 0.0, hi = 1.0;
  FlopSearch best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= 20; ++it) {
    const double mid = 0.5 * (lo + hi);
    double achieved = 1.0;
    Selection sel;
    bool ok = true;
    try {
      sel = threshold_select(scores, mid, options);
      achieved = flop_reduction(model, sel.masks);
    } catch (const DisconnectionError&) {
      ok = false;
    } catch (const ConfigError&) {
      ok = false;  // guard could not be honoured
    }
    if (ok && std::abs(achieved - target) < best_gap) {
      best_gap = std::abs(achieved - target);
      best = {mid, sel, achieved, it};
    }
    if (ok && std::abs(achieved - target) <= 0.01 * target) {
      best.iterations = it;
      return best;
    }
    if (!ok || achieved > target) hi = mid;
    else lo = mid;
  }
  throw ConfigError("FLOP reduction target " + std::to_string(target) + " unreachable (closest " +
                    std::to_string(best_gap == std::numeric_limits<double>::infinity() ? 0.0 : best.achieved) + ")");
}

template <typename T>
PruneOutcome<T> prune(const ModelGraph<T>& model, const Batch<T>& batch, const PruneConfig& config) {
  if (config.ratio.has_value() == config.flop_target.has_value()) {
    throw ConfigError("exactly one of prune ratio and FLOP target must be set");
  }
  const auto start = std::chrono::steady_clock::now();
  PruneOutcome<T> out;
  out.report.criterion = config.criterion;
  out.report.init_policy = to_string(config.init);
  out.report.flop_target = config.flop_target;
  out.costs = cost_table(model, config.lambda);
  ThresholdOptions topt;
  topt.keep_at_least_one = config.keep_at_least_one;

  if (config.criterion == "uniform") {
    if (config.flop_target) throw ConfigError("uniform pruning takes a ratio, not a FLOP target");
    out.masks = uniform_mask(model, *config.ratio, config.seed);
    if (config.keep_at_least_one) {
      for (auto& keep : out.masks.keep) {
        if (std::find(keep.begin(), keep.end(), 1) == keep.end()) keep[config.seed % keep.size()] = 1;
      }
    }
    out.report.ratio = *config.ratio;
    out.report.threshold = std::numeric_limits<double>::quiet_NaN();
  } else {
    if (config.criterion == "3sp" || config.criterion == "3sp-ca") {
      out.raw_scores = score_3sp(model, batch);
    } else if (config.criterion == "grasp-structured") {
      out.raw_scores = score_grasp(model, batch, config.temperature, Granularity::Structured).structured;
    } else {
      throw ConfigError("criterion '" + config.criterion + "' cannot drive structured pruning");
    }
    out.raw_scores.batch_seed = config.seed;
    out.ranking_scores = out.raw_scores;
    if (config.criterion == "3sp-ca") {
      out.ranking_scores = retention_scores(out.raw_scores, out.costs);
      out.report.lambda = config.lambda;
    }
    Selection sel;
    if (config.flop_target) {
      auto found = search_flop_target(model, out.ranking_scores, *config.flop_target, topt);
      sel = std::move(found.selection);
      out.report.ratio = found.ratio;
      out.report.search_iterations = found.iterations;
    } else {
      sel = threshold_select(out.ranking_scores, *config.ratio, topt);
      out.report.ratio = *config.ratio;
    }
    out.masks = std::move(sel.masks);
    out.report.threshold = sel.threshold;
  }

  out.report.units_total = out.masks.total_units();
  out.report.units_pruned = out.masks.pruned_units();
  out.report.params_before = model.parameter_count();
  out.report.flops_before = total_flops(model);
  try {
    out.model = shrink(model, out.masks);
  } catch (const DisconnectionError& e) {
    out.report.disconnected = true;
    out.report.disconnected_layer = e.layer();
    throw;
  }
  if (config.init == InitPolicy::Rescale) out.model = rescale(std::move(out.model));
  if (config.init == InitPolicy::Reinit) out.model = reinit(std::move(out.model), config.seed);
  out.report.prune_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  out.report.params_after = out.model.parameter_count();
  out.report.flops_after = total_flops(out.model);
  for (std::size_t s = 0; s < out.masks.layers.size(); ++s) {
    const std::size_t layer = out.masks.layers[s];
    out.report.layers.push_back(
        {layer, to_string(model.layer(layer).kind), out.masks.kept_in(s), out.masks.keep[s].size()});
  }
  return out;
}

#define CHANPRUNE_INSTANTIATE_PRUNER(T)                                                                         \
  template ModelGraph<T> shrink<T>(const ModelGraph<T>&, const MaskSet&);                                       \
  template ModelGraph<T> rescale<T>(ModelGraph<T>);                                                             \
  template ModelGraph<T> reinit<T>(ModelGraph<T>, std::uint64_t);                                               \
  template double flop_reduction<T>(const ModelGraph<T>&, const MaskSet&);                                      \
  template FlopSearch search_flop_target<T>(const ModelGraph<T>&, const ScoreSet&, double,                      \
                                            const ThresholdOptions&);                                           \
  template PruneOutcome<T> prune<T>(const ModelGraph<T>&, const Batch<T>&, const PruneConfig&);

CHANPRUNE_INSTANTIATE_PRUNER(float)
CHANPRUNE_INSTANTIATE_PRUNER(double)

}  // namespace chanprune
